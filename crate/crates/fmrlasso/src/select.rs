//! Penalty grids, modified BIC, cross-validation, joint `(k, lambda, gamma)`
//! search and the two-stage adaptive estimator.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FmrError, Result};
use crate::gem::{fit_bcd_gem, fit_bcd_gem_from, FitResult, OptimOptions};
use crate::model::{log_likelihood, Dataset, Gamma, MixtureParams, PenaltySpec};
use crate::scaled_lasso::lambda_max;
use crate::seed::derive_seed;

/// Spacing of the penalty grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridSpacing {
    /// Evenly spaced from 0 to the largest useful penalty.
    Linear,
    /// Geometric from a small positive fraction of the largest penalty.
    Log,
}

/// Criterion minimized over the selection grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionCriterion {
    Bic,
    Cv { folds: usize },
}

/// One evaluated grid cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub k: usize,
    pub lambda: f64,
    pub gamma: Gamma,
    /// Effective number of parameters `k + (k-1) + #nonzero`.
    pub d_e: usize,
    pub bic: Option<f64>,
    pub cv_loss: Option<f64>,
    /// Final penalized criterion of the full-data fit.
    pub criterion: Option<f64>,
    pub n_nonzero: usize,
    pub n_iterations: usize,
    pub converged: bool,
    /// Failure reason; failed cells are excluded from the argmin.
    pub error: Option<String>,
}

/// Outcome of a grid search: the argmin plus the full table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    pub best_k: usize,
    pub best_lambda: f64,
    pub best_gamma: Gamma,
    pub criterion_kind: SelectionCriterion,
    pub table: Vec<SelectionRecord>,
    /// Full-data fit at the selected cell (for the CV criterion this is the
    /// refit on all rows, reported alongside the fold losses).
    pub best_fit: FitResult,
}

/// Penalty grid of `m` values ending at the largest useful penalty.
///
/// Linear spacing starts at 0; log spacing starts at a small positive
/// fraction (1/100) of the endpoint. Strictly increasing.
pub fn lambda_grid(data: &Dataset, m: usize, spacing: GridSpacing) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(FmrError::InvalidInput("grid needs at least 2 points".into()));
    }
    let lmax = lambda_max(data)?;
    if lmax <= 0.0 {
        return Err(FmrError::InvalidInput(
            "lambda_max is zero; all covariates are orthogonal to the response".into(),
        ));
    }
    Ok(grid_from_max(lmax, m, spacing))
}

fn grid_from_max(lmax: f64, m: usize, spacing: GridSpacing) -> Vec<f64> {
    match spacing {
        GridSpacing::Linear => (0..m)
            .map(|i| lmax * i as f64 / (m as f64 - 1.0))
            .collect(),
        GridSpacing::Log => {
            let lo = lmax / 100.0;
            let ratio = (lmax / lo).ln() / (m as f64 - 1.0);
            (0..m).map(|i| lo * (ratio * i as f64).exp()).collect()
        }
    }
}

/// Largest useful penalty for a re-weighted problem: the one-component
/// threshold divided by the smallest finite weight per column. This is a
/// grid upper-bound heuristic for `k > 1`, as is the unweighted version.
pub fn adaptive_lambda_max(data: &Dataset, weights: &Array2<f64>) -> Result<f64> {
    let y = data.y();
    let y_norm = y.dot(y).sqrt();
    if y_norm == 0.0 {
        return Err(FmrError::InvalidInput("response is identically zero".into()));
    }
    let sqrt_n = (data.n() as f64).sqrt();
    let mut best = 0.0f64;
    for j in 0..data.p() {
        let w_min = weights
            .column(j)
            .iter()
            .cloned()
            .filter(|w| w.is_finite())
            .fold(f64::INFINITY, f64::min);
        if !w_min.is_finite() {
            continue; // column frozen in every component
        }
        let v = (y.dot(&data.x().column(j)) / (sqrt_n * y_norm)).abs() / w_min;
        best = best.max(v);
    }
    if best <= 0.0 {
        return Err(FmrError::DegenerateInitialization);
    }
    Ok(best)
}

/// Log-spaced grid for the adaptive stage, ending at the re-weighted
/// penalty bound.
pub fn adaptive_lambda_grid(
    data: &Dataset,
    weights: &Array2<f64>,
    m: usize,
) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(FmrError::InvalidInput("grid needs at least 2 points".into()));
    }
    Ok(grid_from_max(
        adaptive_lambda_max(data, weights)?,
        m,
        GridSpacing::Log,
    ))
}

/// Effective number of parameters: `k` scale parameters, `k - 1` free mixing
/// proportions, plus the nonzero coefficients.
pub fn effective_params(fit: &FitResult) -> usize {
    let k = fit.theta.k();
    k + (k - 1) + fit.active_set.len()
}

/// Modified BIC: `-2 * log-likelihood + log(n) * d_e` with the unscaled
/// log-likelihood.
pub fn bic(fit: &FitResult, data: &Dataset) -> Result<f64> {
    let ll = log_likelihood(&fit.theta, data)?;
    Ok(-2.0 * ll + (data.n() as f64).ln() * effective_params(fit) as f64)
}

/// K-fold cross-validated loss: rows are partitioned by a seeded shuffle;
/// each fold is scored by twice the negative log-likelihood of the fit on
/// the complement, and the fold losses are summed.
pub fn cross_validate(
    data: &Dataset,
    k: usize,
    pen: &PenaltySpec,
    folds: usize,
    opts: &OptimOptions,
    seed: u64,
) -> Result<f64> {
    if folds < 2 || folds > data.n() {
        return Err(FmrError::InvalidInput(format!(
            "folds must lie in [2, n] (got {folds}, n={})",
            data.n()
        )));
    }
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignments: Vec<Vec<usize>> = (0..folds)
        .map(|f| order.iter().copied().skip(f).step_by(folds).collect())
        .collect();

    let mut losses: Vec<(usize, std::result::Result<f64, FmrError>)> = assignments
        .par_iter()
        .enumerate()
        .map(|(f, held_out)| {
            let loss = (|| -> Result<f64> {
                let train_rows: Vec<usize> = order
                    .iter()
                    .copied()
                    .filter(|i| !held_out.contains(i))
                    .collect();
                let train = data.subset(&train_rows)?;
                let test = data.subset(held_out)?;
                let mut fold_opts = opts.clone();
                fold_opts.seed = derive_seed(seed, f as u64 + 1);
                let fit = fit_bcd_gem(&train, k, pen, &fold_opts)?;
                Ok(-2.0 * log_likelihood(&fit.theta, &test)?)
            })();
            (f, loss)
        })
        .collect();
    losses.sort_by_key(|(f, _)| *f);

    let mut total = 0.0;
    for (f, loss) in losses {
        match loss {
            Ok(v) => total += v,
            Err(e) => {
                return Err(FmrError::FoldFailed {
                    fold: f,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(total)
}

/// Fits a descending penalty path. Each cell tries a warm start from the
/// previous solution and a cold random-initialization start, keeping the
/// lower criterion; results come back in the input grid order.
pub fn fit_path(
    data: &Dataset,
    k: usize,
    gamma: Gamma,
    weights: Option<Array2<f64>>,
    lambdas: &[f64],
    opts: &OptimOptions,
) -> Vec<std::result::Result<FitResult, FmrError>> {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].partial_cmp(&lambdas[a]).unwrap());

    let mut out: Vec<Option<std::result::Result<FitResult, FmrError>>> =
        (0..lambdas.len()).map(|_| None).collect();
    let mut warm: Option<MixtureParams> = None;
    for idx in order {
        let pen = match build_pen(lambdas[idx], gamma, weights.clone()) {
            Ok(p) => p,
            Err(e) => {
                out[idx] = Some(Err(e));
                continue;
            }
        };
        let cold = fit_bcd_gem(data, k, &pen, opts);
        let warm_fit = warm
            .as_ref()
            .map(|theta| fit_bcd_gem_from(data, &pen, opts, theta));
        let chosen = match (cold, warm_fit) {
            (Ok(c), Some(Ok(w))) => Ok(if w.criterion() < c.criterion() { w } else { c }),
            (Ok(c), Some(Err(_))) | (Ok(c), None) => Ok(c),
            (Err(_), Some(Ok(w))) => Ok(w),
            (Err(e), _) => Err(e),
        };
        if let Ok(fit) = &chosen {
            warm = Some(fit.theta.clone());
        }
        out[idx] = Some(chosen);
    }
    out.into_iter().map(|o| o.expect("filled")).collect()
}

fn build_pen(lambda: f64, gamma: Gamma, weights: Option<Array2<f64>>) -> Result<PenaltySpec> {
    let pen = PenaltySpec::new(lambda, gamma)?;
    match weights {
        Some(w) => pen.with_weights(w),
        None => Ok(pen),
    }
}

/// Exhaustive search over the `(k, gamma, lambda)` grid. Warm starts run
/// along descending `lambda` within each `(k, gamma)` combination; failed
/// cells are recorded with their reason and excluded from the argmin. Ties
/// break toward larger `lambda` (sparser model), then smaller `k`.
pub fn select(
    data: &Dataset,
    k_range: &[usize],
    lambdas: &[f64],
    gammas: &[Gamma],
    criterion: SelectionCriterion,
    opts: &OptimOptions,
) -> Result<SelectionResult> {
    if k_range.is_empty() || lambdas.is_empty() || gammas.is_empty() {
        return Err(FmrError::InvalidInput("empty selection grid".into()));
    }
    let mut table = Vec::new();
    let mut best: Option<(f64, usize)> = None; // (score, table index)
    let mut fits: Vec<Option<FitResult>> = Vec::new();

    for (combo, (&k, &gamma)) in k_range
        .iter()
        .flat_map(|k| gammas.iter().map(move |g| (k, g)))
        .enumerate()
    {
        let mut combo_opts = opts.clone();
        combo_opts.seed = derive_seed(opts.seed, combo as u64);
        let path = fit_path(data, k, gamma, None, lambdas, &combo_opts);
        for (lam, fit) in lambdas.iter().zip(path) {
            let record_index = table.len();
            match fit {
                Ok(fit) => {
                    let bic_value = bic(&fit, data)?;
                    let cv_loss = match criterion {
                        SelectionCriterion::Cv { folds } => {
                            let pen = PenaltySpec::new(*lam, gamma)?;
                            match cross_validate(data, k, &pen, folds, &combo_opts, combo_opts.seed)
                            {
                                Ok(v) => Some(v),
                                Err(e) => {
                                    table.push(failed_record(k, *lam, gamma, e.to_string()));
                                    fits.push(None);
                                    continue;
                                }
                            }
                        }
                        SelectionCriterion::Bic => None,
                    };
                    let score = match criterion {
                        SelectionCriterion::Bic => bic_value,
                        SelectionCriterion::Cv { .. } => cv_loss.unwrap(),
                    };
                    table.push(SelectionRecord {
                        k,
                        lambda: *lam,
                        gamma,
                        d_e: effective_params(&fit),
                        bic: Some(bic_value),
                        cv_loss,
                        criterion: Some(fit.criterion()),
                        n_nonzero: fit.active_set.len(),
                        n_iterations: fit.n_iterations,
                        converged: fit.converged,
                        error: None,
                    });
                    fits.push(Some(fit));
                    let better = match best {
                        None => true,
                        Some((s, i)) => {
                            score < s
                                || (score == s
                                    && (*lam > table[i].lambda
                                        || (*lam == table[i].lambda && k < table[i].k)))
                        }
                    };
                    if better {
                        best = Some((score, record_index));
                    }
                }
                Err(e) => {
                    table.push(failed_record(k, *lam, gamma, e.to_string()));
                    fits.push(None);
                }
            }
        }
    }

    let (_, best_index) = best.ok_or(FmrError::AllCellsFailed(table.len()))?;
    let best_fit = fits[best_index].take().expect("successful cell");
    let rec = &table[best_index];
    Ok(SelectionResult {
        best_k: rec.k,
        best_lambda: rec.lambda,
        best_gamma: rec.gamma,
        criterion_kind: criterion,
        table,
        best_fit,
    })
}

fn failed_record(k: usize, lambda: f64, gamma: Gamma, error: String) -> SelectionRecord {
    SelectionRecord {
        k,
        lambda,
        gamma,
        d_e: 0,
        bic: None,
        cv_loss: None,
        criterion: None,
        n_nonzero: 0,
        n_iterations: 0,
        converged: false,
        error: Some(error),
    }
}

/// Re-weighting for the adaptive stage: `w_rj = 1 / |phi_ini_rj|`, with
/// `+inf` (a frozen coordinate) where the initial coefficient is zero.
pub fn adaptive_weights(initial: &MixtureParams) -> Result<Array2<f64>> {
    if initial.phi.iter().all(|&v| v == 0.0) {
        return Err(FmrError::DegenerateInitialization);
    }
    Ok(initial.phi.mapv(|v| {
        if v == 0.0 {
            f64::INFINITY
        } else {
            1.0 / v.abs()
        }
    }))
}

/// Two-stage adaptive estimator: builds weights from `initial`, runs the
/// re-weighted penalty path and selects by the given criterion.
pub fn fit_adaptive(
    data: &Dataset,
    k: usize,
    initial: &MixtureParams,
    lambdas: &[f64],
    gamma: Gamma,
    criterion: SelectionCriterion,
    opts: &OptimOptions,
) -> Result<(FitResult, SelectionResult)> {
    if initial.k() != k {
        return Err(FmrError::DimensionMismatch(format!(
            "initial estimate has {} components, expected {k}",
            initial.k()
        )));
    }
    let weights = adaptive_weights(initial)?;
    let path = fit_path(data, k, gamma, Some(weights.clone()), lambdas, opts);

    let mut table = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    let mut fits: Vec<Option<FitResult>> = Vec::new();
    for (lam, fit) in lambdas.iter().zip(path) {
        let record_index = table.len();
        match fit {
            Ok(fit) => {
                let bic_value = bic(&fit, data)?;
                let cv_loss = match criterion {
                    SelectionCriterion::Cv { folds } => {
                        let pen =
                            PenaltySpec::new(*lam, gamma)?.with_weights(weights.clone())?;
                        Some(cross_validate(data, k, &pen, folds, opts, opts.seed)?)
                    }
                    SelectionCriterion::Bic => None,
                };
                let score = match criterion {
                    SelectionCriterion::Bic => bic_value,
                    SelectionCriterion::Cv { .. } => cv_loss.unwrap(),
                };
                table.push(SelectionRecord {
                    k,
                    lambda: *lam,
                    gamma,
                    d_e: effective_params(&fit),
                    bic: Some(bic_value),
                    cv_loss,
                    criterion: Some(fit.criterion()),
                    n_nonzero: fit.active_set.len(),
                    n_iterations: fit.n_iterations,
                    converged: fit.converged,
                    error: None,
                });
                fits.push(Some(fit));
                let better = match best {
                    None => true,
                    Some((s, i)) => score < s || (score == s && *lam > table[i].lambda),
                };
                if better {
                    best = Some((score, record_index));
                }
            }
            Err(e) => {
                table.push(failed_record(k, *lam, gamma, e.to_string()));
                fits.push(None);
            }
        }
    }
    let (_, best_index) = best.ok_or(FmrError::AllCellsFailed(table.len()))?;
    let best_fit = fits[best_index].take().expect("successful cell");
    let rec = &table[best_index];
    let result = SelectionResult {
        best_k: rec.k,
        best_lambda: rec.lambda,
        best_gamma: rec.gamma,
        criterion_kind: criterion,
        table,
        best_fit: best_fit.clone(),
    };
    Ok((best_fit, result))
}
