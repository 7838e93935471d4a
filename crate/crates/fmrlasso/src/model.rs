//! Model parameterizations, densities and penalized criteria for finite
//! mixtures of Gaussian regressions.
//!
//! The response density is a weighted sum of `k` Gaussian regression
//! components. Two equivalent parameterizations are provided:
//!
//! * [`NaturalParams`]: per-component coefficients `beta_r`, standard
//!   deviations `sigma_r` and mixing proportions `pi_r`.
//! * [`MixtureParams`]: the working parameterization `phi_r = beta_r /
//!   sigma_r`, `rho_r = 1 / sigma_r`, under which each component's penalized
//!   subproblem is convex and the estimator is scale-equivariant.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{FmrError, Result};
use crate::sim::ModelSpec;

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_74;

/// Tolerance for the simplex-sum invariant on mixing proportions.
pub const PI_SUM_TOL: f64 = 1e-12;

/// Natural parameterization: `(beta, sigma, pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    /// `k x p` regression coefficients, one row per component.
    pub beta: Array2<f64>,
    /// Component standard deviations, all positive.
    pub sigma: Array1<f64>,
    /// Mixing proportions on the open simplex.
    pub pi: Array1<f64>,
}

impl NaturalParams {
    pub fn new(beta: Array2<f64>, sigma: Array1<f64>, pi: Array1<f64>) -> Result<Self> {
        let k = beta.nrows();
        if sigma.len() != k || pi.len() != k {
            return Err(FmrError::DimensionMismatch(format!(
                "beta has {k} rows but sigma has {} and pi has {} entries",
                sigma.len(),
                pi.len()
            )));
        }
        if sigma.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(FmrError::InvalidInput("sigma must be positive and finite".into()));
        }
        check_simplex(&pi)?;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(FmrError::InvalidInput("beta must be finite".into()));
        }
        Ok(Self { beta, sigma, pi })
    }

    /// Number of mixture components.
    pub fn k(&self) -> usize {
        self.beta.nrows()
    }

    /// Number of covariates.
    pub fn p(&self) -> usize {
        self.beta.ncols()
    }

    /// Map to the working parameterization `phi = beta / sigma`, `rho = 1 / sigma`.
    pub fn to_mixture(&self) -> MixtureParams {
        let mut phi = self.beta.clone();
        for (mut row, &s) in phi.rows_mut().into_iter().zip(self.sigma.iter()) {
            row.mapv_inplace(|b| b / s);
        }
        let rho = self.sigma.mapv(|s| 1.0 / s);
        MixtureParams {
            phi,
            rho,
            pi: self.pi.clone(),
        }
    }
}

/// Working parameterization: `(phi, rho, pi)` with `phi_r = beta_r / sigma_r`
/// and `rho_r = 1 / sigma_r`.
///
/// `pi` is stored with all `k` entries (the last coordinate is redundant) and
/// is renormalized after every update; this keeps all components symmetric in
/// the code paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    /// `k x p` scaled coefficients.
    pub phi: Array2<f64>,
    /// Inverse standard deviations, all positive.
    pub rho: Array1<f64>,
    /// Mixing proportions on the open simplex.
    pub pi: Array1<f64>,
}

impl MixtureParams {
    pub fn new(phi: Array2<f64>, rho: Array1<f64>, pi: Array1<f64>) -> Result<Self> {
        let k = phi.nrows();
        if rho.len() != k || pi.len() != k {
            return Err(FmrError::DimensionMismatch(format!(
                "phi has {k} rows but rho has {} and pi has {} entries",
                rho.len(),
                pi.len()
            )));
        }
        if rho.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(FmrError::InvalidInput("rho must be positive and finite".into()));
        }
        check_simplex(&pi)?;
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(FmrError::InvalidInput("phi must be finite".into()));
        }
        Ok(Self { phi, rho, pi })
    }

    /// Number of mixture components.
    pub fn k(&self) -> usize {
        self.phi.nrows()
    }

    /// Number of covariates.
    pub fn p(&self) -> usize {
        self.phi.ncols()
    }

    /// Map back to the natural parameterization via `sigma = 1 / rho`,
    /// `beta = phi * sigma`.
    ///
    /// The conversion is applied unconditionally; an extreme `rho` (at the
    /// working-precision boundary) indicates a degenerate component and the
    /// resulting `sigma` is correspondingly extreme.
    pub fn to_natural(&self) -> NaturalParams {
        let sigma = self.rho.mapv(|r| 1.0 / r);
        let mut beta = self.phi.clone();
        for (mut row, &s) in beta.rows_mut().into_iter().zip(sigma.iter()) {
            row.mapv_inplace(|f| f * s);
        }
        NaturalParams {
            beta,
            sigma,
            pi: self.pi.clone(),
        }
    }

    /// Flatten `(phi, rho, pi)` into a single coordinate vector, used by the
    /// optimizer's stopping rule and diagnostics.
    pub fn flat_coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.k() * (self.p() + 2));
        out.extend(self.phi.iter().copied());
        out.extend(self.rho.iter().copied());
        out.extend(self.pi.iter().copied());
        out
    }
}

fn check_simplex(pi: &Array1<f64>) -> Result<()> {
    if pi.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(FmrError::InvalidInput("pi must be strictly positive".into()));
    }
    let sum: f64 = pi.sum();
    if (sum - 1.0).abs() > PI_SUM_TOL {
        return Err(FmrError::InvalidInput(format!(
            "pi must sum to 1 (got {sum:.17})"
        )));
    }
    Ok(())
}

/// Fixed-design regression data: `n x p` design matrix plus response vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    column_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, validating finiteness and dimensions. Rows with
    /// `y_i = 0` are legal but weaken the boundedness guarantee of the
    /// penalized criterion, so they trigger a warning.
    pub fn new(x: Array2<f64>, y: Array1<f64>, column_names: Vec<String>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(FmrError::InvalidInput("design matrix must be non-empty".into()));
        }
        if y.len() != x.nrows() {
            return Err(FmrError::DimensionMismatch(format!(
                "x has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if !column_names.is_empty() && column_names.len() != x.ncols() {
            return Err(FmrError::DimensionMismatch(format!(
                "{} column names for {} columns",
                column_names.len(),
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(FmrError::InvalidInput("non-finite entries in data".into()));
        }
        let names = if column_names.is_empty() {
            (0..x.ncols()).map(|j| format!("x{}", j + 1)).collect()
        } else {
            column_names
        };
        let ds = Self { x, y, column_names: names };
        let zeros = ds.zero_response_rows();
        if !zeros.is_empty() {
            log::warn!(
                "{} response value(s) are exactly zero (rows {:?}); the penalized criterion is \
                 only guaranteed bounded below when all y_i != 0",
                zeros.len(),
                zeros
            );
        }
        Ok(ds)
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Row indices with `y_i = 0` exactly.
    pub fn zero_response_rows(&self) -> Vec<usize> {
        self.y
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Restrict to a subset of rows (used by cross-validation).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select(ndarray::Axis(0), rows);
        let y = self.y.select(ndarray::Axis(0), rows);
        Self::new(x, y, self.column_names.clone())
    }
}

/// Exponent of the mixing proportion in the penalty term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gamma {
    /// Penalty independent of `pi` (convex case).
    Zero,
    /// Square-root weighting.
    Half,
    /// Linear weighting.
    One,
}

impl Gamma {
    pub fn value(self) -> f64 {
        match self {
            Gamma::Zero => 0.0,
            Gamma::Half => 0.5,
            Gamma::One => 1.0,
        }
    }

    /// `pi^gamma` with the exact exponents 0, 1/2, 1.
    pub fn pow(self, pi: f64) -> f64 {
        match self {
            Gamma::Zero => 1.0,
            Gamma::Half => pi.sqrt(),
            Gamma::One => pi,
        }
    }

    pub fn parse(v: f64) -> Result<Self> {
        if v == 0.0 {
            Ok(Gamma::Zero)
        } else if v == 0.5 {
            Ok(Gamma::Half)
        } else if v == 1.0 {
            Ok(Gamma::One)
        } else {
            Err(FmrError::InvalidInput(format!(
                "gamma must be one of 0, 0.5, 1 (got {v})"
            )))
        }
    }
}

/// Penalty specification: strength, `pi`-exponent, optional adaptive weights.
///
/// A weight of `+inf` freezes the coordinate at zero (the `0 * inf = 0`
/// convention applies when the coefficient is exactly zero).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lambda: f64,
    pub gamma: Gamma,
    /// Optional `k x p` adaptive weights; absent means all ones.
    pub weights: Option<Array2<f64>>,
}

impl PenaltySpec {
    pub fn new(lambda: f64, gamma: Gamma) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(FmrError::InvalidInput(format!(
                "lambda must be nonnegative (got {lambda})"
            )));
        }
        Ok(Self { lambda, gamma, weights: None })
    }

    pub fn with_weights(mut self, weights: Array2<f64>) -> Result<Self> {
        if weights.iter().any(|&w| w < 0.0 || w.is_nan()) {
            return Err(FmrError::InvalidInput(
                "adaptive weights must be nonnegative (possibly +inf)".into(),
            ));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    /// Weight at `(r, j)`; 1 when no weight matrix is set.
    pub fn weight(&self, r: usize, j: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[[r, j]])
    }

    /// Does any weight freeze its coordinate at zero?
    pub fn has_frozen(&self) -> bool {
        self.weights
            .as_ref()
            .is_some_and(|w| w.iter().any(|v| v.is_infinite()))
    }
}

/// Set of selected `(component, covariate)` pairs, 0-indexed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedSet {
    pub entries: std::collections::BTreeSet<(usize, usize)>,
}

impl SelectedSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Covariate indices selected in at least one component.
    pub fn covariates(&self) -> std::collections::BTreeSet<usize> {
        self.entries.iter().map(|&(_, j)| j).collect()
    }
}

/// Entries of `phi` larger than `tol` in absolute value.
///
/// The optimizer produces exact zeros, so the default tolerance is 0; a
/// positive tolerance is only useful for externally supplied parameters.
pub fn selected_set(theta: &MixtureParams, tol: f64) -> SelectedSet {
    let mut entries = std::collections::BTreeSet::new();
    for ((r, j), &v) in theta.phi.indexed_iter() {
        if v.abs() > tol {
            entries.insert((r, j));
        }
    }
    SelectedSet { entries }
}

/// Log of the mixture density `sum_r pi_r (rho_r / sqrt(2 pi)) exp(-(rho_r y
/// - x' phi_r)^2 / 2)`, computed via log-sum-exp.
pub fn log_density(theta: &MixtureParams, x: ArrayView1<f64>, y: f64) -> Result<f64> {
    if x.len() != theta.p() {
        return Err(FmrError::DimensionMismatch(format!(
            "x has {} entries, phi has {} columns",
            x.len(),
            theta.p()
        )));
    }
    if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(FmrError::InvalidInput("non-finite observation".into()));
    }
    let mut terms = Vec::with_capacity(theta.k());
    for r in 0..theta.k() {
        let xphi = theta.phi.row(r).dot(&x);
        let z = theta.rho[r] * y - xphi;
        terms.push(theta.pi[r].ln() + theta.rho[r].ln() - 0.5 * z * z);
    }
    Ok(log_sum_exp(&terms) - LN_SQRT_2PI)
}

/// Same as [`log_density`] but with the linear predictors `x' phi_r` already
/// computed (the optimizer maintains them incrementally).
pub(crate) fn log_density_from_linpred(theta: &MixtureParams, linpred: &[f64], y: f64) -> f64 {
    let mut terms = Vec::with_capacity(theta.k());
    for r in 0..theta.k() {
        let z = theta.rho[r] * y - linpred[r];
        terms.push(theta.pi[r].ln() + theta.rho[r].ln() - 0.5 * z * z);
    }
    log_sum_exp(&terms) - LN_SQRT_2PI
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Unscaled log-likelihood `sum_i log h(y_i | x_i)` (used by the BIC and the
/// predictive loss).
pub fn log_likelihood(theta: &MixtureParams, data: &Dataset) -> Result<f64> {
    check_theta_data(theta, data)?;
    let mut total = 0.0;
    for i in 0..data.n() {
        total += log_density(theta, data.x().row(i), data.y()[i])?;
    }
    Ok(total)
}

/// Negative log-likelihood scaled by `1/n`.
pub fn neg_log_likelihood(theta: &MixtureParams, data: &Dataset) -> Result<f64> {
    Ok(-log_likelihood(theta, data)? / data.n() as f64)
}

/// Penalty term `lambda sum_r pi_r^gamma sum_j w_rj |phi_rj|`.
///
/// Returns `+inf` if a frozen coordinate (`w = +inf`) has a nonzero
/// coefficient; a frozen coordinate at exactly zero contributes nothing.
pub fn penalty_value(theta: &MixtureParams, pen: &PenaltySpec) -> f64 {
    let mut total = 0.0;
    for r in 0..theta.k() {
        let scale = pen.gamma.pow(theta.pi[r]);
        let mut norm = 0.0;
        for j in 0..theta.p() {
            let v = theta.phi[[r, j]];
            if v == 0.0 {
                continue;
            }
            let w = pen.weight(r, j);
            if w.is_infinite() {
                return f64::INFINITY;
            }
            norm += w * v.abs();
        }
        total += scale * norm;
    }
    pen.lambda * total
}

/// Penalized negative log-likelihood (the optimization criterion), in
/// `1/n`-scaled form.
pub fn penalized_nll(theta: &MixtureParams, data: &Dataset, pen: &PenaltySpec) -> Result<f64> {
    Ok(neg_log_likelihood(theta, data)? + penalty_value(theta, pen))
}

/// Evaluates the criterion on `(X, bY)` at the rescaled parameter
/// `(phi, rho/b, pi)` and on `(X, Y)` at `(phi, rho, pi)` plus `log b`.
///
/// The two values agree identically: `-log(rho/b) = -log rho + log b` and
/// `(rho/b)(bY) = rho Y`, so the criterion shifts by the additive constant
/// `log b` under response scaling, which implies identical minimizers.
pub fn scale_shift_identity_check(
    theta: &MixtureParams,
    data: &Dataset,
    pen: &PenaltySpec,
    b: f64,
) -> Result<(f64, f64)> {
    if !(b > 0.0) {
        return Err(FmrError::InvalidInput(format!("b must be positive (got {b})")));
    }
    let scaled_data = Dataset::new(
        data.x().clone(),
        data.y().mapv(|v| b * v),
        data.column_names().to_vec(),
    )?;
    let theta_b = MixtureParams::new(
        theta.phi.clone(),
        theta.rho.mapv(|r| r / b),
        theta.pi.clone(),
    )?;
    let lhs = penalized_nll(&theta_b, &scaled_data, pen)?;
    let rhs = penalized_nll(theta, data, pen)? + b.ln();
    Ok((lhs, rhs))
}

/// Signal-to-noise ratio of a generative model:
/// `sum_r pi_r (beta_r' Cov(X) beta_r + sigma_r^2) / sum_r pi_r sigma_r^2`.
pub fn snr(spec: &ModelSpec) -> f64 {
    let cov = spec.covariance_matrix();
    let beta = spec.padded_beta();
    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..spec.k() {
        let b = beta.row(r);
        let quad = b.dot(&cov.dot(&b));
        num += spec.pi[r] * (quad + spec.sigma[r] * spec.sigma[r]);
        den += spec.pi[r] * spec.sigma[r] * spec.sigma[r];
    }
    num / den
}

/// A certified finite lower bound for the penalized criterion with
/// `gamma = 0`, valid whenever every `y_i != 0` and `lambda > 0`.
///
/// Derivation sketch, writing `y_min = min_i |y_i|` and
/// `x_max = max_i ||x_i||_inf`: the mixture density at observation `i` is a
/// convex combination of component terms, so it is at most
/// `max_r rho_r exp(-(rho_r y_i - x_i' phi_r)^2 / 2) / sqrt(2 pi)`, and the
/// criterion is at least
/// `log sqrt(2 pi) + min_r { lambda ||phi_r||_1 - log rho_r + min_i (rho_r
/// y_i - x_i' phi_r)^2 / 2 }`.
/// For a single component, with `d = |rho y_i - x_i' phi|` at the minimizing
/// row, `||phi||_1 >= (rho y_min - d)_+ / x_max`; minimizing over `d >= 0`
/// and then over `rho > 0` in closed form yields the bound below.
pub fn boundedness_lower_bound(data: &Dataset, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(FmrError::InvalidInput("lambda must be positive".into()));
    }
    let y_min = data
        .y()
        .iter()
        .map(|v| v.abs())
        .fold(f64::INFINITY, f64::min);
    if y_min == 0.0 {
        return Err(FmrError::InvalidInput(
            "bound requires all y_i != 0".into(),
        ));
    }
    let x_max = data
        .x()
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v.abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    if x_max == 0.0 {
        return Err(FmrError::InvalidInput("design matrix is all zero".into()));
    }
    let a = lambda / x_max;
    // Branch 1: the penalty forces the criterion up when the fit is exact.
    let b1 = 1.0 - 0.5 * a * a + (lambda * y_min / x_max).ln();
    // Branch 2: an imperfect fit pays the squared residual instead.
    let b2 = 0.5 + y_min.ln();
    Ok(LN_SQRT_2PI + b1.min(b2))
}

pub(crate) fn check_theta_data(theta: &MixtureParams, data: &Dataset) -> Result<()> {
    if theta.p() != data.p() {
        return Err(FmrError::DimensionMismatch(format!(
            "theta has {} covariates, data has {}",
            theta.p(),
            data.p()
        )));
    }
    Ok(())
}
