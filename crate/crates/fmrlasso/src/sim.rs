//! Generators for the benchmark mixture-regression designs and the metrics
//! used to score fitted models (predictive loss, true/false positives).

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FmrError, Result};
use crate::gem::{FitResult, OptimOptions};
use crate::model::{log_likelihood, Dataset, Gamma, NaturalParams, PenaltySpec};
use crate::seed::derive_seed;
use crate::select::{
    adaptive_lambda_grid, adaptive_weights, bic, cross_validate, fit_path, lambda_grid,
    GridSpacing,
};

/// Covariance structure of the simulated design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CovKind {
    Identity,
    /// `corr(X^l, X^m) = rate^|l-m|` with unit variances.
    Ar1(f64),
}

/// Generative description of a simulation model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// Sample size of each generated dataset (train, validation, test alike).
    pub n: usize,
    /// `k x p_act` coefficients of the active covariates.
    pub beta: Array2<f64>,
    pub sigma: Array1<f64>,
    pub pi: Array1<f64>,
    pub cov_kind: CovKind,
    /// Total number of covariates; columns beyond `p_act` are pure noise.
    pub p_tot: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p_tot < self.p_act() {
            return Err(FmrError::InvalidInput(format!(
                "p_tot={} smaller than p_act={}",
                self.p_tot,
                self.p_act()
            )));
        }
        if let CovKind::Ar1(rate) = self.cov_kind {
            if !(rate > 0.0 && rate < 1.0) {
                return Err(FmrError::InvalidInput("ar1 rate must lie in (0,1)".into()));
            }
        }
        if self.sigma.len() != self.k() || self.pi.len() != self.k() {
            return Err(FmrError::DimensionMismatch("sigma/pi vs beta rows".into()));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.beta.nrows()
    }

    pub fn p_act(&self) -> usize {
        self.beta.ncols()
    }

    /// Overrides the total covariate count (extra columns are noise).
    pub fn with_p_tot(mut self, p_tot: usize) -> Self {
        self.p_tot = p_tot.max(self.p_act());
        self
    }

    /// Coefficients zero-padded to `p_tot` columns.
    pub fn padded_beta(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.k(), self.p_tot));
        out.slice_mut(ndarray::s![.., ..self.p_act()])
            .assign(&self.beta);
        out
    }

    /// Full `p_tot x p_tot` design covariance matrix.
    pub fn covariance_matrix(&self) -> Array2<f64> {
        match self.cov_kind {
            CovKind::Identity => Array2::eye(self.p_tot),
            CovKind::Ar1(rate) => Array2::from_shape_fn((self.p_tot, self.p_tot), |(l, m)| {
                rate.powi((l as i32 - m as i32).abs())
            }),
        }
    }

    /// Indices of the truly active covariates.
    pub fn active_covariates(&self) -> BTreeSet<usize> {
        (0..self.p_act()).collect()
    }

    /// Ground-truth parameters padded to `p_tot` covariates.
    pub fn truth(&self) -> Result<NaturalParams> {
        NaturalParams::new(self.padded_beta(), self.sigma.clone(), self.pi.clone())
    }
}

/// Named benchmark design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetName {
    M1,
    M2,
    M3,
    M4,
    M5,
    /// M1 with mixing proportions 0.3 / 0.7.
    M1Unbalanced,
    /// Sparsity series index 1..=7: `p_act = i + 2`, `n = 50 i`,
    /// `p_tot = 10 * 2^(i-1)`.
    SparsitySeries(usize),
}

impl PresetName {
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "m1" => Ok(Self::M1),
            "m2" => Ok(Self::M2),
            "m3" => Ok(Self::M3),
            "m4" => Ok(Self::M4),
            "m5" => Ok(Self::M5),
            "m1_unbalanced" | "m1unbalanced" => Ok(Self::M1Unbalanced),
            _ => {
                if let Some(rest) = lower.strip_prefix("s") {
                    if let Ok(i) = rest.parse::<usize>() {
                        return Ok(Self::SparsitySeries(i));
                    }
                }
                Err(FmrError::InvalidInput(format!("unknown model preset '{s}'")))
            }
        }
    }
}

/// Returns the printed parameters of a benchmark design.
pub fn preset(name: PresetName) -> ModelSpec {
    let two_comp = |sigma: f64| {
        (
            Array2::from_shape_vec((2, 5), vec![3.0; 5].into_iter().chain(vec![-1.0; 5]).collect())
                .unwrap(),
            Array1::from_elem(2, sigma),
            Array1::from_elem(2, 0.5),
        )
    };
    match name {
        PresetName::M1 => {
            let (beta, sigma, pi) = two_comp(0.5);
            ModelSpec {
                name: "M1".into(),
                n: 100,
                beta,
                sigma,
                pi,
                cov_kind: CovKind::Identity,
                p_tot: 5,
            }
        }
        PresetName::M2 => {
            let (beta, sigma, pi) = two_comp(1.0);
            ModelSpec {
                name: "M2".into(),
                n: 100,
                beta,
                sigma,
                pi,
                cov_kind: CovKind::Identity,
                p_tot: 5,
            }
        }
        PresetName::M3 => {
            let (beta, sigma, pi) = two_comp(1.5);
            ModelSpec {
                name: "M3".into(),
                n: 100,
                beta,
                sigma,
                pi,
                cov_kind: CovKind::Identity,
                p_tot: 5,
            }
        }
        PresetName::M4 => ModelSpec {
            name: "M4".into(),
            n: 150,
            beta: Array2::from_shape_vec(
                (3, 6),
                vec![
                    3.0, 3.0, 0.0, 0.0, 0.0, 0.0, //
                    0.0, 0.0, -2.0, -2.0, 0.0, 0.0, //
                    0.0, 0.0, 0.0, 0.0, -3.0, 2.0,
                ],
            )
            .unwrap(),
            sigma: Array1::from_elem(3, 0.5),
            pi: Array1::from_elem(3, 1.0 / 3.0),
            cov_kind: CovKind::Identity,
            p_tot: 6,
        },
        PresetName::M5 => {
            let (beta, sigma, pi) = two_comp(0.95);
            ModelSpec {
                name: "M5".into(),
                n: 100,
                beta,
                sigma,
                pi,
                cov_kind: CovKind::Ar1(0.8),
                p_tot: 5,
            }
        }
        PresetName::M1Unbalanced => {
            let (beta, sigma, _) = two_comp(0.5);
            ModelSpec {
                name: "M1_unbalanced".into(),
                n: 100,
                beta,
                sigma,
                pi: Array1::from_vec(vec![0.3, 0.7]),
                cov_kind: CovKind::Identity,
                p_tot: 5,
            }
        }
        PresetName::SparsitySeries(i) => {
            let i = i.clamp(1, 7);
            let p_act = i + 2;
            let beta = Array2::from_shape_fn((2, p_act), |(r, _)| if r == 0 { 3.0 } else { -1.0 });
            ModelSpec {
                name: format!("S{i}"),
                n: 50 * i,
                beta,
                sigma: Array1::from_elem(2, 0.5),
                pi: Array1::from_elem(2, 0.5),
                cov_kind: CovKind::Identity,
                p_tot: 10 * (1 << (i - 1)),
            }
        }
    }
}

/// Draws one dataset from the generative model.
///
/// Pinned generator: ChaCha8 seeded stream; per row the `p_tot` design
/// normals are drawn first (AR(1) rows use the recursion `x_1 = z_1`,
/// `x_j = rate x_{j-1} + sqrt(1 - rate^2) z_j`), then the component label
/// (inverse-CDF on the mixing proportions), then the noise normal.
pub fn generate(spec: &ModelSpec, seed: u64) -> Result<(Dataset, NaturalParams, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n;
    let p = spec.p_tot;
    let beta = spec.padded_beta();
    let mut x = Array2::zeros((n, p));
    let mut labels = Vec::with_capacity(n);
    let mut y = Array1::zeros(n);
    for i in 0..n {
        match spec.cov_kind {
            CovKind::Identity => {
                for j in 0..p {
                    x[[i, j]] = rng.sample(StandardNormal);
                }
            }
            CovKind::Ar1(rate) => {
                let scale = (1.0 - rate * rate).sqrt();
                let mut prev: f64 = rng.sample(StandardNormal);
                x[[i, 0]] = prev;
                for j in 1..p {
                    let z: f64 = rng.sample(StandardNormal);
                    prev = rate * prev + scale * z;
                    x[[i, j]] = prev;
                }
            }
        }
        let u: f64 = rng.gen();
        let mut label = spec.k() - 1;
        let mut acc = 0.0;
        for (r, &w) in spec.pi.iter().enumerate() {
            acc += w;
            if u < acc {
                label = r;
                break;
            }
        }
        labels.push(label);
        let z: f64 = rng.sample(StandardNormal);
        y[i] = x.row(i).dot(&beta.row(label)) + spec.sigma[label] * z;
    }
    let data = Dataset::new(x, y, vec![])?;
    Ok((data, spec.truth()?, labels))
}

/// Per-run evaluation metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Twice the negative log-likelihood on the test data.
    pub pred_loss: f64,
    pub tp: usize,
    pub fp: usize,
    pub tpr: f64,
    pub fpr: f64,
}

/// Scores a fit against the set of truly active covariates. A covariate
/// counts as selected if its coefficient is nonzero in at least one
/// component, so no component matching is needed.
pub fn evaluate(fit: &FitResult, truth_active: &BTreeSet<usize>, test: &Dataset) -> Result<RunMetrics> {
    let selected = fit.active_set.covariates();
    let p_tot = fit.theta.p();
    let tp = selected.intersection(truth_active).count();
    let fp = selected.difference(truth_active).count();
    let n_active = truth_active.len();
    let n_inactive = p_tot - n_active;
    let pred_loss = -2.0 * log_likelihood(&fit.theta, test)?;
    Ok(RunMetrics {
        pred_loss,
        tp,
        fp,
        tpr: if n_active == 0 { 0.0 } else { tp as f64 / n_active as f64 },
        fpr: if n_inactive == 0 { 0.0 } else { fp as f64 / n_inactive as f64 },
    })
}

/// Estimation pipeline run per simulated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pipeline {
    /// Single L1-penalized stage.
    OneStage,
    /// Two stages: tuned first stage, then re-weighted penalty.
    Adaptive,
}

/// How the penalty level is tuned within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionRule {
    /// Minimize twice the negative log-likelihood on held-out validation data.
    Validation,
    /// Minimize the modified BIC on the training data.
    Bic,
    /// Minimize the K-fold cross-validated loss on the training data.
    Cv { folds: usize },
}

/// Study configuration shared by all runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub gamma: Gamma,
    pub grid_size: usize,
    pub opts: OptimOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            gamma: Gamma::One,
            grid_size: 20,
            opts: OptimOptions::default(),
        }
    }
}

/// One simulation run: selected penalty level plus test metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRun {
    pub run: usize,
    pub lambda: f64,
    pub metrics: RunMetrics,
}

/// Median and quartiles of one metric across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSummary {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Aggregated study output. Failed runs are recorded, never dropped
/// silently.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudySummary {
    pub model: String,
    pub p_tot: usize,
    pub pipeline: Pipeline,
    pub selection: SelectionRule,
    pub runs: Vec<StudyRun>,
    pub failures: Vec<(usize, String)>,
    pub pred_loss: MetricSummary,
    pub tp: MetricSummary,
    pub fp: MetricSummary,
    pub tpr: MetricSummary,
    pub fpr: MetricSummary,
}

/// Runs `n_runs` independent train/validation/test replications of the
/// chosen pipeline and aggregates the test metrics.
pub fn run_study(
    spec: &ModelSpec,
    n_runs: usize,
    pipeline: Pipeline,
    selection: SelectionRule,
    seed: u64,
    config: &StudyConfig,
) -> Result<StudySummary> {
    spec.validate()?;
    let results: Vec<(usize, std::result::Result<StudyRun, String>)> = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let out = single_run(spec, run, pipeline, selection, seed, config)
                .map_err(|e| e.to_string());
            (run, out)
        })
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut sorted = results;
    sorted.sort_by_key(|(run, _)| *run);
    for (run, out) in sorted {
        match out {
            Ok(r) => runs.push(r),
            Err(e) => failures.push((run, e)),
        }
    }
    if runs.is_empty() {
        return Err(FmrError::AllCellsFailed(n_runs));
    }

    let collect = |f: &dyn Fn(&StudyRun) -> f64| -> MetricSummary {
        let mut v: Vec<f64> = runs.iter().map(f).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        MetricSummary {
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
        }
    };
    Ok(StudySummary {
        model: spec.name.clone(),
        p_tot: spec.p_tot,
        pipeline,
        selection,
        pred_loss: collect(&|r| r.metrics.pred_loss),
        tp: collect(&|r| r.metrics.tp as f64),
        fp: collect(&|r| r.metrics.fp as f64),
        tpr: collect(&|r| r.metrics.tpr),
        fpr: collect(&|r| r.metrics.fpr),
        runs,
        failures,
    })
}

fn single_run(
    spec: &ModelSpec,
    run: usize,
    pipeline: Pipeline,
    selection: SelectionRule,
    seed: u64,
    config: &StudyConfig,
) -> Result<StudyRun> {
    let base = derive_seed(seed, run as u64);
    let (train, _, _) = generate(spec, derive_seed(base, 1))?;
    let (validation, _, _) = generate(spec, derive_seed(base, 2))?;
    let (test, _, _) = generate(spec, derive_seed(base, 3))?;
    let mut opts = config.opts.clone();
    opts.seed = derive_seed(base, 4);

    let lambdas = lambda_grid(&train, config.grid_size, GridSpacing::Log)?;
    let k = spec.k();
    let (best_lambda, best_fit) = tune_path(
        &train,
        &validation,
        k,
        config.gamma,
        None,
        &lambdas,
        selection,
        &opts,
    )?;

    let (best_lambda, best_fit) = match pipeline {
        Pipeline::OneStage => (best_lambda, best_fit),
        Pipeline::Adaptive => {
            let weights = adaptive_weights(&best_fit.theta)?;
            let lambdas = adaptive_lambda_grid(&train, &weights, config.grid_size)?;
            tune_path(
                &train,
                &validation,
                k,
                config.gamma,
                Some(weights),
                &lambdas,
                selection,
                &opts,
            )?
        }
    };

    let metrics = evaluate(&best_fit, &spec.active_covariates(), &test)?;
    Ok(StudyRun {
        run,
        lambda: best_lambda,
        metrics,
    })
}

/// Fits the penalty path on `train` and picks the best fit according to the
/// selection rule.
#[allow(clippy::too_many_arguments)]
fn tune_path(
    train: &Dataset,
    validation: &Dataset,
    k: usize,
    gamma: Gamma,
    weights: Option<Array2<f64>>,
    lambdas: &[f64],
    selection: SelectionRule,
    opts: &OptimOptions,
) -> Result<(f64, FitResult)> {
    let fits = fit_path(train, k, gamma, weights.clone(), lambdas, opts);
    let mut best: Option<(f64, f64, FitResult)> = None;
    for (idx, fit) in fits.into_iter().enumerate() {
        let fit = match fit {
            Ok(f) => f,
            Err(e) => {
                log::debug!("lambda={} failed: {e}", lambdas[idx]);
                continue;
            }
        };
        let score = match selection {
            SelectionRule::Validation => -2.0 * log_likelihood(&fit.theta, validation)?,
            SelectionRule::Bic => bic(&fit, train)?,
            SelectionRule::Cv { folds } => {
                let mut pen = PenaltySpec::new(lambdas[idx], gamma)?;
                if let Some(w) = &weights {
                    pen = pen.with_weights(w.clone())?;
                }
                cross_validate(train, k, &pen, folds, opts, opts.seed)?
            }
        };
        let better = match &best {
            None => true,
            Some((s, l, _)) => {
                score < *s || (score == *s && lambdas[idx] > *l)
            }
        };
        if better {
            best = Some((score, lambdas[idx], fit));
        }
    }
    best.map(|(_, l, f)| (l, f))
        .ok_or(FmrError::AllCellsFailed(lambdas.len()))
}

/// Linear-interpolation quantile of a sorted sample.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q * (sorted.len() as f64 - 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Cholesky factor of a symmetric positive-definite matrix (test and
/// diagnostics helper; the generator itself uses the AR(1) recursion).
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(FmrError::DimensionMismatch("matrix must be square".into()));
    }
    let mut l: Array2<f64> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for t in 0..j {
                s -= l[[i, t]] * l[[j, t]];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(FmrError::InvalidInput(format!(
                        "matrix not positive definite at pivot {i}"
                    )));
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::snr;
    use approx::assert_abs_diff_eq;

    #[test]
    fn preset_table_parameters() {
        let m4 = preset(PresetName::M4);
        assert_eq!(m4.k(), 3);
        assert_eq!(m4.n, 150);
        assert_eq!(
            m4.beta.row(2).to_vec(),
            vec![0.0, 0.0, 0.0, 0.0, -3.0, 2.0]
        );
        assert!(m4.sigma.iter().all(|&s| s == 0.5));
        for w in m4.pi.iter() {
            assert_abs_diff_eq!(*w, 1.0 / 3.0, epsilon = 1e-15);
        }

        let s1 = preset(PresetName::SparsitySeries(1));
        assert_eq!(s1.p_act(), 3);
        assert_eq!(s1.n, 50);
        assert_eq!(s1.p_tot, 10);
        let s4 = preset(PresetName::SparsitySeries(4));
        assert_eq!((s4.p_act(), s4.n, s4.p_tot), (6, 200, 80));

        assert_abs_diff_eq!(snr(&preset(PresetName::M2)), 26.0, epsilon = 1e-9);
    }

    #[test]
    fn snr_reference_values() {
        assert_abs_diff_eq!(snr(&preset(PresetName::M1)), 101.0, epsilon = 1e-9);
        assert_abs_diff_eq!(snr(&preset(PresetName::M3)), 12.111111111, epsilon = 1e-6);
        assert_abs_diff_eq!(snr(&preset(PresetName::M4)), 53.0, epsilon = 1e-9);
        // AR(1) design with sigma = 0.95: close to (but not exactly) 101.
        let m5 = snr(&preset(PresetName::M5));
        assert!((m5 - 101.0).abs() <= 0.5, "computed {m5}");
        // Padding with noise covariates leaves the SNR unchanged.
        assert_abs_diff_eq!(
            snr(&preset(PresetName::M1).with_p_tot(25)),
            101.0,
            epsilon = 1e-9
        );
        // All-zero coefficients give SNR exactly 1.
        let null = ModelSpec {
            name: "null".into(),
            n: 10,
            beta: Array2::zeros((1, 3)),
            sigma: Array1::from_elem(1, 1.0),
            pi: Array1::from_elem(1, 1.0),
            cov_kind: CovKind::Identity,
            p_tot: 3,
        };
        assert_abs_diff_eq!(snr(&null), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn generator_determinism_and_label_frequencies() {
        let spec = preset(PresetName::M1Unbalanced);
        let (d1, _, l1) = generate(&spec, 7).unwrap();
        let (d2, _, l2) = generate(&spec, 7).unwrap();
        assert_eq!(d1.y(), d2.y());
        assert_eq!(l1, l2);
        let (d3, _, _) = generate(&spec, 8).unwrap();
        assert_ne!(d1.y(), d3.y());

        // Class frequencies over many draws match pi within 3 SEs.
        let mut big = spec.clone();
        big.n = 100_000;
        let (_, _, labels) = generate(&big, 1).unwrap();
        let freq1 = labels.iter().filter(|&&l| l == 0).count() as f64 / 100_000.0;
        let se = (0.3f64 * 0.7 / 100_000.0).sqrt();
        assert!((freq1 - 0.3).abs() <= 3.0 * se, "freq {freq1}");
    }

    #[test]
    fn generator_unit_variance_sanity() {
        let null = ModelSpec {
            name: "null".into(),
            n: 10_000,
            beta: Array2::zeros((1, 2)),
            sigma: Array1::from_elem(1, 1.0),
            pi: Array1::from_elem(1, 1.0),
            cov_kind: CovKind::Identity,
            p_tot: 2,
        };
        let (data, _, _) = generate(&null, 3).unwrap();
        let mean = data.y().mean().unwrap();
        let var = data.y().mapv(|v| (v - mean) * (v - mean)).sum() / 9999.0;
        assert!((var - 1.0).abs() <= 0.05, "var {var}");
    }

    #[test]
    fn ar1_sample_correlation_matches_rate() {
        let mut spec = preset(PresetName::M5);
        spec.n = 10_000;
        let (data, _, _) = generate(&spec, 5).unwrap();
        let c1 = data.x().column(0);
        let c2 = data.x().column(1);
        let m1 = c1.mean().unwrap();
        let m2 = c2.mean().unwrap();
        let cov = c1
            .iter()
            .zip(c2.iter())
            .map(|(a, b)| (a - m1) * (b - m2))
            .sum::<f64>();
        let v1 = c1.iter().map(|a| (a - m1) * (a - m1)).sum::<f64>();
        let v2 = c2.iter().map(|b| (b - m2) * (b - m2)).sum::<f64>();
        let corr = cov / (v1 * v2).sqrt();
        assert!((corr - 0.8).abs() <= 0.02, "corr {corr}");
    }

    #[test]
    fn m1_response_variance_matches_snr_identity() {
        let mut spec = preset(PresetName::M1);
        spec.n = 10_000;
        let (data, _, _) = generate(&spec, 13).unwrap();
        let mean = data.y().mean().unwrap();
        let var = data.y().mapv(|v| (v - mean) * (v - mean)).sum() / (spec.n as f64 - 1.0);
        assert!((var - 25.25).abs() <= 0.8, "var {var}");
    }

    #[test]
    fn ar1_covariance_positive_definite() {
        for rate in [0.1, 0.5, 0.8, 0.95] {
            let spec = ModelSpec {
                name: "t".into(),
                n: 1,
                beta: Array2::zeros((1, 12)),
                sigma: Array1::from_elem(1, 1.0),
                pi: Array1::from_elem(1, 1.0),
                cov_kind: CovKind::Ar1(rate),
                p_tot: 12,
            };
            assert!(cholesky(&spec.covariance_matrix()).is_ok());
        }
    }

    #[test]
    fn evaluate_ratio_arithmetic() {
        use crate::model::{MixtureParams, SelectedSet};
        // Crafted fit: 5 true + 4 false of 20 inactive (p_tot = 25).
        let mut phi = Array2::zeros((2, 25));
        for j in 0..5 {
            phi[[0, j]] = 1.0;
        }
        for j in 5..9 {
            phi[[1, j]] = -0.5;
        }
        let theta = MixtureParams::new(
            phi,
            Array1::from_elem(2, 2.0),
            Array1::from_elem(2, 0.5),
        )
        .unwrap();
        let active_set = crate::model::selected_set(&theta, 0.0);
        let fit = FitResult {
            theta,
            criterion_trace: vec![0.0],
            n_iterations: 0,
            converged: true,
            stationarity_residual: 0.0,
            active_set,
        };
        let spec = preset(PresetName::M1).with_p_tot(25);
        let (test, _, _) = generate(&spec, 2).unwrap();
        let m = evaluate(&fit, &spec.active_covariates(), &test).unwrap();
        assert_eq!((m.tp, m.fp), (5, 4));
        assert_abs_diff_eq!(m.tpr, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.fpr, 0.2, epsilon = 1e-15);

        // All-zero fit selects nothing.
        let zero = FitResult {
            theta: MixtureParams::new(
                Array2::zeros((2, 25)),
                Array1::from_elem(2, 2.0),
                Array1::from_elem(2, 0.5),
            )
            .unwrap(),
            criterion_trace: vec![0.0],
            n_iterations: 0,
            converged: true,
            stationarity_residual: 0.0,
            active_set: SelectedSet::default(),
        };
        let m = evaluate(&zero, &spec.active_covariates(), &test).unwrap();
        assert_eq!((m.tp, m.fp), (0, 0));
        assert_eq!((m.tpr, m.fpr), (0.0, 0.0));
    }

    #[test]
    fn quantile_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(quantile(&v, 0.5), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile(&v, 0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile(&v, 1.0), 4.0, epsilon = 1e-15);
    }

    #[test]
    fn single_run_study_summary_equals_run_metrics() {
        let spec = preset(PresetName::M1);
        let config = StudyConfig {
            grid_size: 8,
            ..Default::default()
        };
        let summary = run_study(
            &spec,
            1,
            Pipeline::OneStage,
            SelectionRule::Validation,
            42,
            &config,
        )
        .unwrap();
        assert_eq!(summary.runs.len(), 1);
        assert!(summary.failures.is_empty());
        let m = &summary.runs[0].metrics;
        assert_abs_diff_eq!(summary.tp.median, m.tp as f64, epsilon = 1e-15);
        assert_abs_diff_eq!(summary.pred_loss.median, m.pred_loss, epsilon = 1e-15);
    }
}
