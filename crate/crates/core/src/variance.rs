//! Variance estimators for the dose-response coefficients.
//!
//! | estimator  | variance            | accounts for GPS estimation |
//! |------------|---------------------|-----------------------------|
//! | naive      | model-based         |                             |
//! | weighted   | sandwich            |                             |
//! | weighted   | linearized          | yes                         |
//! | weighted   | bootstrap           | yes                         |
//! | stratified | pooled model-based  |                             |
//! | stratified | pooled linearized   |                             |
//! | stratified | bootstrap           | yes                         |

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::Rng;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::drf::{self, DrfFit, DrfMethod};
use crate::error::{Error, Result};
use crate::gps::{self, PropensityFit, WeightSet};
use crate::numkit;
use crate::par;
use crate::seed::{rng_from_seed, sub_seed};

/// Normal quantile used for 95% Wald intervals.
pub const Z_95: f64 = 1.96;

/// A bootstrap replicate that fails is redrawn with a fresh stream this many
/// times before it counts as failed.
pub const BOOTSTRAP_RETRIES: u32 = 5;

/// 2x2 covariance of `(beta_0, beta_1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cov2(pub [[f64; 2]; 2]);

impl Cov2 {
    pub const ZERO: Cov2 = Cov2([[0.0; 2]; 2]);

    fn from_matrix(m: &Matrix2<f64>) -> Self {
        let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
        Cov2([[m[(0, 0)], off], [off, m[(1, 1)]]])
    }


    /// Standard errors, clamping tiny negative round-off on the diagonal.
    pub fn se(&self) -> [f64; 2] {
        [self.0[0][0].max(0.0).sqrt(), self.0[1][1].max(0.0).sqrt()]
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let [[a, b], [_, d]] = self.0;
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mid - rad, mid + rad]
    }

    /// Symmetric, finite, and positive semi-definite up to `-tol * trace`.
    pub fn is_symmetric_psd(&self, tol: f64) -> bool {
        let m = self.0;
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return false;
        }
        let sym = (m[0][1] - m[1][0]).abs() <= 1e-12 * (m[0][1].abs().max(m[1][0].abs()) + f64::MIN_POSITIVE);
        let trace = m[0][0] + m[1][1];
        sym && m[0][0] >= 0.0 && m[1][1] >= 0.0 && self.eigenvalues()[0] >= -tol * trace
    }

    fn scaled(self, s: f64) -> Self {
        Cov2(self.0.map(|r| r.map(|v| v * s)))
    }

    fn add(self, o: Cov2) -> Self {
        let mut out = self.0;
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += o.0[i][j];
            }
        }
        Cov2(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    ModelBased,
    Sandwich,
    Linearized,
    PooledModelBased,
    PooledLinearized,
    Bootstrap,
}

impl VarianceMethod {
    pub fn name(self) -> &'static str {
        match self {
            VarianceMethod::ModelBased => "model_based",
            VarianceMethod::Sandwich => "sandwich",
            VarianceMethod::Linearized => "linearized",
            VarianceMethod::PooledModelBased => "pooled_model_based",
            VarianceMethod::PooledLinearized => "pooled_linearized",
            VarianceMethod::Bootstrap => "bootstrap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BootstrapMeta {
    pub requested: usize,
    pub successful: usize,
    /// Replicates that still failed after all retries.
    pub failed: usize,
    /// Total redraws across all replicates.
    pub retries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub cov: Cov2,
    pub method: VarianceMethod,
    pub bootstrap: Option<BootstrapMeta>,
}

impl VarianceEstimate {
    fn closed_form(cov: Cov2, method: VarianceMethod) -> Self {
        Self {
            cov,
            method,
            bootstrap: None,
        }
    }

    pub fn se(&self) -> [f64; 2] {
        self.cov.se()
    }
}

/// Per-unit linearized variables.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearizedVariables {
    /// One value per unit, in row order.
    Weighted(Vec<[f64; 2]>),
    /// One vector per stratum, units in the stratum's row order.
    Stratified(Vec<Vec<[f64; 2]>>),
}

/// `beta +/- 1.96 se`, per coefficient.
pub fn wald_interval(beta: f64, se: f64) -> (f64, f64) {
    (beta - Z_95 * se, beta + Z_95 * se)
}

fn expect_method(fit: &DrfFit, want: DrfMethod) -> Result<()> {
    if fit.method != want {
        return Err(Error::InvalidArgument(format!(
            "expected a {} fit, got {}",
            want.name(),
            fit.method.name()
        )));
    }
    Ok(())
}

fn solve2(a: &Matrix2<f64>, b: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let a = DMatrix::from_iterator(2, 2, a.iter().copied());
    let b = DMatrix::from_iterator(2, 2, b.iter().copied());
    let x = numkit::solve_spd(&a, &b)?;
    Ok(Matrix2::from_iterator(x.iter().copied()))
}

/// `sigma2 (X'X)^-1` for an OLS line on `(t, y)` with `sigma2 = RSS / (n - 2)`.
fn ols_model_cov(t: &[f64], y: &[f64], beta: [f64; 2]) -> Result<Cov2> {
    let n = t.len();
    if n < 3 {
        return Err(Error::TooFewRows { n, p: 0, required: 3 });
    }
    let mut xtx = Matrix2::zeros();
    let mut rss = 0.0;
    for (&ti, &yi) in t.iter().zip(y) {
        let x = Vector2::new(1.0, ti);
        xtx += x * x.transpose();
        let r = yi - beta[0] - beta[1] * ti;
        rss += r * r;
    }
    let inv = solve2(&xtx, &Matrix2::identity())?;
    Ok(Cov2::from_matrix(&(inv * (rss / (n - 2) as f64))))
}

/// Classical OLS covariance of the naive fit.
pub fn var_model_based(d: &Dataset, fit: &DrfFit) -> Result<VarianceEstimate> {
    expect_method(fit, DrfMethod::Naive)?;
    let cov = ols_model_cov(d.t(), d.y(), fit.beta)?;
    Ok(VarianceEstimate::closed_form(cov, VarianceMethod::ModelBased))
}

/// `A = (1/n) sum w_i T~_i T~_i'`.
fn weighted_gram(t: &[f64], w: &[f64]) -> Matrix2<f64> {
    let mut a = Matrix2::zeros();
    for (&ti, &wi) in t.iter().zip(w) {
        let x = Vector2::new(1.0, ti);
        a += x * x.transpose() * wi;
    }
    a / t.len() as f64
}

/// Robust covariance with the weights held fixed:
/// `A^-1 M A^-1 / n` with `A = (1/n) sum w_i T~_i T~_i'` and
/// `M = (1/n) sum w_i^2 H_i H_i'`, `H_i = T~_i (Y_i - T~_i' beta)`.
/// No finite-sample factor is applied.
pub fn var_sandwich_weighted(d: &Dataset, ws: &WeightSet, fit: &DrfFit) -> Result<VarianceEstimate> {
    expect_method(fit, DrfMethod::Weighted)?;
    let n = d.n() as f64;
    let a = weighted_gram(d.t(), &ws.w);
    let mut m = Matrix2::zeros();
    for (i, r) in fit.residuals(d).enumerate() {
        let h = Vector2::new(1.0, d.t()[i]) * (ws.w[i] * r);
        m += h * h.transpose();
    }
    m /= n;
    let ainv_m = solve2(&a, &m)?;
    let cov = solve2(&a, &ainv_m.transpose())?.transpose() / n;
    Ok(VarianceEstimate::closed_form(Cov2::from_matrix(&cov), VarianceMethod::Sandwich))
}

/// Estimating-function values `F_i(gamma_hat)` of the propensity step, one
/// row per unit, ordered like [`gps::Gamma::to_vec`].
pub fn propensity_scores(d: &Dataset, f: &PropensityFit) -> DMatrix<f64> {
    let n = d.n();
    let p = d.p();
    let nf = n as f64;
    let c_t = (nf - 1.0) / nf * f.sigma2_t;
    let c_r = (nf - p as f64 - 1.0) / nf * f.sigma2;
    let mut out = DMatrix::zeros(n, p + 4);
    for i in 0..n {
        let t = d.t()[i];
        let dm = t - f.mu_t;
        let dc = t - f.linpred[i];
        out[(i, 0)] = dm;
        out[(i, 1)] = dm * dm - c_t;
        out[(i, 2)] = dc;
        for (j, z) in d.z_row(i).iter().enumerate() {
            out[(i, 3 + j)] = dc * z;
        }
        out[(i, p + 3)] = dc * dc - c_r;
    }
    out
}

/// The block-diagonal Jacobian `C` of the propensity estimating equations:
/// `diag(1, (n-1)/n, (1/n) sum Z~ Z~', (n-p-1)/n)`.
pub fn propensity_jacobian(d: &Dataset, f: &PropensityFit) -> DMatrix<f64> {
    let n = d.n() as f64;
    let p = d.p();
    let k = p + 4;
    let mut c = DMatrix::zeros(k, k);
    c[(0, 0)] = 1.0;
    c[(1, 1)] = (n - 1.0) / n;
    c.view_mut((2, 2), (p + 1, p + 1)).copy_from(&(f.gram() / n));
    c[(k - 1, k - 1)] = (n - p as f64 - 1.0) / n;
    c
}

/// Linearized variance of the weighted estimator, accounting for the
/// estimation of the propensity parameters.
///
/// `I_i = A^-1 { w_i H_i(beta) + B C^-1 F_i(gamma) }` with
/// `B = (1/n) sum H_i grad w_i'`, and the variance is
/// `sum (I_i - Ibar)(I_i - Ibar)' / (n (n - 1))`.
pub fn linearized_weighted(
    d: &Dataset,
    f: &PropensityFit,
    ws: &WeightSet,
    fit: &DrfFit,
) -> Result<(LinearizedVariables, VarianceEstimate)> {
    expect_method(fit, DrfMethod::Weighted)?;
    let n = d.n();
    let nf = n as f64;
    let k = d.p() + 4;
    if ws.grad_w.nrows() != n || ws.grad_w.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "weight gradient is {}x{}, expected {n}x{k}",
            ws.grad_w.nrows(),
            ws.grad_w.ncols()
        )));
    }
    let resid: Vec<f64> = fit.residuals(d).collect();
    let t = d.t();

    // B' (k x 2), accumulated directly in transposed form.
    let mut bt = DMatrix::zeros(k, 2);
    for i in 0..n {
        let h0 = resid[i];
        let h1 = t[i] * resid[i];
        for c in 0..k {
            let g = ws.grad_w[(i, c)];
            bt[(c, 0)] += g * h0;
            bt[(c, 1)] += g * h1;
        }
    }
    bt /= nf;
    // C is symmetric, so (B C^-1)' = C^-1 B'.
    let dt = numkit::solve_spd(&propensity_jacobian(d, f), &bt)?;
    let scores = propensity_scores(d, f);
    let correction = &scores * &dt; // n x 2, row i = (B C^-1 F_i)'

    let mut u = DMatrix::zeros(2, n);
    for i in 0..n {
        u[(0, i)] = ws.w[i] * resid[i] + correction[(i, 0)];
        u[(1, i)] = ws.w[i] * t[i] * resid[i] + correction[(i, 1)];
    }
    let a = weighted_gram(t, &ws.w);
    let a = DMatrix::from_iterator(2, 2, a.iter().copied());
    let lin = numkit::solve_spd(&a, &u)?;
    let vars: Vec<[f64; 2]> = (0..n).map(|i| [lin[(0, i)], lin[(1, i)]]).collect();
    let cov = centered_cov(&vars).scaled(1.0 / (nf * (nf - 1.0)));
    Ok((
        LinearizedVariables::Weighted(vars),
        VarianceEstimate::closed_form(cov, VarianceMethod::Linearized),
    ))
}

/// `sum (v_i - vbar)(v_i - vbar)'` without normalization.
fn centered_cov(v: &[[f64; 2]]) -> Cov2 {
    let n = v.len() as f64;
    let m0 = v.iter().map(|x| x[0]).sum::<f64>() / n;
    let m1 = v.iter().map(|x| x[1]).sum::<f64>() / n;
    let (mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0);
    for x in v {
        let a = x[0] - m0;
        let b = x[1] - m1;
        s00 += a * a;
        s01 += a * b;
        s11 += b * b;
    }
    Cov2([[s00, s01], [s01, s11]])
}

fn stratum_columns(d: &Dataset, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    rows.iter().map(|&r| (d.t()[r], d.y()[r])).unzip()
}

/// `sum_l (n_l / n)^2 Cov_l` with per-stratum model-based OLS covariances.
pub fn pooled_model_based(d: &Dataset, fit: &DrfFit) -> Result<VarianceEstimate> {
    expect_method(fit, DrfMethod::Stratified)?;
    let per = fit
        .per_stratum
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("stratified fit without strata".into()))?;
    let n = d.n() as f64;
    let mut total = Cov2::ZERO;
    for s in per {
        let (t, y) = stratum_columns(d, &s.rows);
        let p = s.n() as f64 / n;
        total = total.add(ols_model_cov(&t, &y, s.beta)?.scaled(p * p));
    }
    Ok(VarianceEstimate::closed_form(total, VarianceMethod::PooledModelBased))
}

/// Pooled linearized variance of the stratified estimator.
///
/// Inside stratum `l`, with `m` and `s2` the stratum mean and variance
/// (divisor `n_l - 1`) of `T` and `e_i` the OLS residual,
/// `I_i = (1/s2) [[s2 + m^2, -m], [-m, 1]] (e_i, T_i e_i)'`; the variance is
/// `sum_l p_l^2 / (n_l (n_l - 1)) sum_i (I_i - Ibar_l)(I_i - Ibar_l)'`.
pub fn pooled_linearized(d: &Dataset, fit: &DrfFit) -> Result<(LinearizedVariables, VarianceEstimate)> {
    expect_method(fit, DrfMethod::Stratified)?;
    let per = fit
        .per_stratum
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("stratified fit without strata".into()))?;
    let n = d.n() as f64;
    let mut total = Cov2::ZERO;
    let mut all = Vec::with_capacity(per.len());
    for s in per {
        let (t, y) = stratum_columns(d, &s.rows);
        let nl = t.len() as f64;
        let m = t.iter().sum::<f64>() / nl;
        let s2 = t.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (nl - 1.0);
        if !(s2 > 0.0) {
            return Err(Error::ZeroExposureVariance(Some(s.index)));
        }
        let vars: Vec<[f64; 2]> = t
            .iter()
            .zip(&y)
            .map(|(&ti, &yi)| {
                let e = yi - s.beta[0] - s.beta[1] * ti;
                let phi1 = ti * e;
                [((s2 + m * m) * e - m * phi1) / s2, (phi1 - m * e) / s2]
            })
            .collect();
        let p = nl / n;
        total = total.add(centered_cov(&vars).scaled(p * p / (nl * (nl - 1.0))));
        all.push(vars);
    }
    Ok((
        LinearizedVariables::Stratified(all),
        VarianceEstimate::closed_form(total, VarianceMethod::PooledLinearized),
    ))
}

/// Which pipeline the bootstrap refits on every resample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "estimator", rename_all = "lowercase")]
pub enum BootstrapTarget {
    Weighted,
    Stratified { l_count: usize },
}

/// Full-pipeline point estimate: propensity model, then weights or strata,
/// then the dose-response line.
pub fn pipeline_beta(d: &Dataset, target: BootstrapTarget) -> Result<[f64; 2]> {
    let f = gps::fit_propensity(d)?;
    match target {
        BootstrapTarget::Weighted => {
            let w = gps::weights(d, &f)?;
            drf::wls_beta(d.t(), d.y(), &w)
        }
        BootstrapTarget::Stratified { l_count } => drf::stratified_beta(d, &f.linpred, l_count),
    }
}

/// Seed of replicate `r`, attempt `a` under a bootstrap stream seed.
pub fn bootstrap_replicate_seed(seed: u64, replicate: usize, attempt: u32) -> u64 {
    sub_seed(seed, attempt as u64, replicate as u64)
}

fn resample_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Case-resampling bootstrap covariance (divisor `successful - 1`).
///
/// Replicate `r` draws its row indices from its own stream
/// ([`bootstrap_replicate_seed`]), so the result does not depend on the
/// order in which replicates are evaluated.
pub fn var_bootstrap(d: &Dataset, target: BootstrapTarget, n_boot: usize, seed: u64) -> Result<VarianceEstimate> {
    if n_boot < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bootstrap replicates, got {n_boot}")));
    }
    let n = d.n();
    let results = par::map_indexed(n_boot, |r| {
        let mut retries = 0usize;
        for attempt in 0..=BOOTSTRAP_RETRIES {
            let idx = resample_indices(n, bootstrap_replicate_seed(seed, r, attempt));
            match pipeline_beta(&d.subset(&idx), target) {
                Ok(b) if b.iter().all(|v| v.is_finite()) => return (Some(b), retries),
                _ => retries += 1,
            }
        }
        (None, retries - 1)
    });
    let betas: Vec<[f64; 2]> = results.iter().filter_map(|(b, _)| *b).collect();
    let failed = n_boot - betas.len();
    let retries = results.iter().map(|(_, r)| r).sum();
    if failed * 10 > n_boot || betas.len() < 2 {
        return Err(Error::BootstrapDegenerate { failed, requested: n_boot });
    }
    let cov = centered_cov(&betas).scaled(1.0 / (betas.len() as f64 - 1.0));
    Ok(VarianceEstimate {
        cov,
        method: VarianceMethod::Bootstrap,
        bootstrap: Some(BootstrapMeta {
            requested: n_boot,
            successful: betas.len(),
            failed,
            retries,
        }),
    })
}
