//! Point estimators of the linear dose-response function
//! `mu(t) = beta_0 + beta_1 t`: naive OLS, GPS-weighted least squares and
//! the stratified (pooled per-stratum OLS) estimator.

use serde::Serialize;

use crate::dataset::{split_by_strata, Dataset, Stratum};
use crate::error::{Error, Result};
use crate::gps::{PropensityFit, WeightSet};
use crate::numkit::{self, RCOND_THRESHOLD};

/// Decile strata.
pub const DEFAULT_STRATA: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DrfMethod {
    Naive,
    Weighted,
    Stratified,
}

impl DrfMethod {
    pub fn name(self) -> &'static str {
        match self {
            DrfMethod::Naive => "naive",
            DrfMethod::Weighted => "weighted",
            DrfMethod::Stratified => "stratified",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumFit {
    /// 1-based stratum index.
    pub index: usize,
    pub beta: [f64; 2],
    /// Original row indices of the stratum members.
    pub rows: Vec<usize>,
}

impl StratumFit {
    pub fn n(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrfFit {
    pub beta: [f64; 2],
    pub method: DrfMethod,
    /// `beta_0 + beta_1 T_i` for every unit.
    pub fitted: Vec<f64>,
    pub per_stratum: Option<Vec<StratumFit>>,
    pub weights: Option<Vec<f64>>,
}

impl DrfFit {
    fn new(d: &Dataset, beta: [f64; 2], method: DrfMethod) -> Self {
        Self {
            beta,
            method,
            fitted: d.t().iter().map(|t| beta[0] + beta[1] * t).collect(),
            per_stratum: None,
            weights: None,
        }
    }

    pub fn residuals<'a>(&'a self, d: &'a Dataset) -> impl Iterator<Item = f64> + 'a {
        d.y().iter().zip(&self.fitted).map(|(y, f)| y - f)
    }
}

pub fn predict_drf(fit: &DrfFit, t: f64) -> f64 {
    fit.beta[0] + fit.beta[1] * t
}

/// Why a straight-line fit failed, before it is mapped to a caller-specific
/// error.
enum LineFailure {
    ConstantExposure,
    Singular(f64),
}

/// Weighted least-squares line through `(t, y)`.
///
/// The 2x2 normal equations are solved in centered form:
/// `beta_1 = Sxy / Sxx`, `beta_0 = ybar - beta_1 tbar` with weighted means.
fn line(t: &[f64], y: &[f64], w: Option<&[f64]>) -> std::result::Result<[f64; 2], LineFailure> {
    if t.iter().all(|&v| v == t[0]) {
        return Err(LineFailure::ConstantExposure);
    }
    let wt = |i: usize| w.map_or(1.0, |w| w[i]);
    let (mut sw, mut st, mut sy) = (0.0, 0.0, 0.0);
    for i in 0..t.len() {
        let wi = wt(i);
        sw += wi;
        st += wi * t[i];
        sy += wi * y[i];
    }
    let tbar = st / sw;
    let ybar = sy / sw;
    let (mut sxx, mut sxy, mut stt) = (0.0, 0.0, 0.0);
    for i in 0..t.len() {
        let wi = wt(i);
        let dt = t[i] - tbar;
        sxx += wi * dt * dt;
        sxy += wi * dt * (y[i] - ybar);
        stt += wi * t[i] * t[i];
    }
    // Equilibrated reciprocal condition of the Gram matrix [[sw, st], [st, stt]].
    let rcond = sxx / stt;
    if !(rcond >= RCOND_THRESHOLD) || !sxy.is_finite() {
        return Err(LineFailure::Singular(rcond));
    }
    let b1 = sxy / sxx;
    Ok([ybar - b1 * tbar, b1])
}

pub(crate) fn ols_beta(t: &[f64], y: &[f64]) -> Result<[f64; 2]> {
    line(t, y, None).map_err(|e| match e {
        LineFailure::ConstantExposure => Error::ZeroExposureVariance(None),
        LineFailure::Singular(rcond) => Error::SingularMatrix { rcond },
    })
}

pub(crate) fn wls_beta(t: &[f64], y: &[f64], w: &[f64]) -> Result<[f64; 2]> {
    if w.len() != t.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} rows",
            w.len(),
            t.len()
        )));
    }
    if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidArgument(format!("weights must be positive and finite, got {v}")));
    }
    line(t, y, Some(w)).map_err(|e| match e {
        LineFailure::ConstantExposure => Error::SingularMatrix { rcond: 0.0 },
        LineFailure::Singular(rcond) => Error::SingularMatrix { rcond },
    })
}

/// Ordinary least squares of `Y` on `(1, T)`.
pub fn fit_naive(d: &Dataset) -> Result<DrfFit> {
    let beta = ols_beta(d.t(), d.y())?;
    Ok(DrfFit::new(d, beta, DrfMethod::Naive))
}

/// Weighted least squares of `Y` on `(1, T)` with the stabilized weights.
pub fn fit_weighted(d: &Dataset, ws: &WeightSet) -> Result<DrfFit> {
    fit_weighted_with(d, &ws.w)
}

/// [`fit_weighted`] with an arbitrary positive weight vector.
pub fn fit_weighted_with(d: &Dataset, w: &[f64]) -> Result<DrfFit> {
    let beta = wls_beta(d.t(), d.y(), w)?;
    let mut fit = DrfFit::new(d, beta, DrfMethod::Weighted);
    fit.weights = Some(w.to_vec());
    Ok(fit)
}

/// Stratum membership (1-based) from the quantiles of the propensity linear
/// predictor.
///
/// Cut points are the `0, 1/L, ..., 1` quantiles; intervals are closed on
/// the right and the lowest one is also closed on the left, so a unit lying
/// exactly on a cut point goes to the lower stratum. Duplicated cut points
/// are an error rather than a silent merge.
pub fn assign_strata(linpred: &[f64], l_count: usize) -> Result<Vec<usize>> {
    if l_count == 0 {
        return Err(Error::InvalidArgument("stratum count must be at least 1".into()));
    }
    let n = linpred.len();
    if n < 3 * l_count {
        return Err(Error::InvalidArgument(format!(
            "{n} units cannot fill {l_count} strata of at least 3"
        )));
    }
    let mut sorted = linpred.to_vec();
    if sorted.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN linear predictor".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (0..=l_count)
        .map(|l| numkit::quantile_sorted(&sorted, l as f64 / l_count as f64))
        .collect();
    // The lowest interval is closed on both ends, so only a repeated cut
    // above it empties a stratum outright.
    if let Some(k) = (2..=l_count).find(|&k| cuts[k] <= cuts[k - 1]) {
        return Err(Error::EmptyStratum(k));
    }
    let interior = &cuts[1..l_count];
    let assignment: Vec<usize> = linpred
        .iter()
        .map(|&x| interior.partition_point(|&c| c < x) + 1)
        .collect();
    let mut counts = vec![0usize; l_count];
    for &s in &assignment {
        counts[s - 1] += 1;
    }
    if let Some(l) = counts.iter().position(|&c| c < 3) {
        return Err(Error::EmptyStratum(l + 1));
    }
    Ok(assignment)
}

/// Per-stratum OLS pooled with weights `n_l / n`.
pub fn fit_stratified(d: &Dataset, f: &PropensityFit, l_count: usize) -> Result<DrfFit> {
    let assignment = assign_strata(&f.linpred, l_count)?;
    let strata = split_by_strata(d, &assignment, l_count)?;
    fit_strata(d, strata)
}

fn fit_strata(d: &Dataset, strata: Vec<Stratum>) -> Result<DrfFit> {
    let n = d.n() as f64;
    let mut per = Vec::with_capacity(strata.len());
    for s in strata {
        let beta = ols_beta(s.data.t(), s.data.y()).map_err(|e| match e {
            Error::ZeroExposureVariance(_) => Error::ZeroExposureVariance(Some(s.index)),
            other => other,
        })?;
        per.push(StratumFit {
            index: s.index,
            beta,
            rows: s.rows,
        });
    }
    let beta = pool(&per, n);
    let mut fit = DrfFit::new(d, beta, DrfMethod::Stratified);
    fit.per_stratum = Some(per);
    Ok(fit)
}

/// `sum_l (n_l / n) beta_l`, accumulated in stratum order.
pub fn pool(per: &[StratumFit], n: f64) -> [f64; 2] {
    let mut beta = [0.0; 2];
    for s in per {
        let p = s.n() as f64 / n;
        beta[0] += p * s.beta[0];
        beta[1] += p * s.beta[1];
    }
    beta
}

/// Stratified point estimate without materializing sub-datasets.
pub(crate) fn stratified_beta(d: &Dataset, linpred: &[f64], l_count: usize) -> Result<[f64; 2]> {
    let assignment = assign_strata(linpred, l_count)?;
    let mut t_by: Vec<Vec<f64>> = vec![Vec::new(); l_count];
    let mut y_by: Vec<Vec<f64>> = vec![Vec::new(); l_count];
    for (i, &s) in assignment.iter().enumerate() {
        t_by[s - 1].push(d.t()[i]);
        y_by[s - 1].push(d.y()[i]);
    }
    let n = d.n() as f64;
    let mut beta = [0.0; 2];
    for l in 0..l_count {
        let b = ols_beta(&t_by[l], &y_by[l]).map_err(|e| match e {
            Error::ZeroExposureVariance(_) => Error::ZeroExposureVariance(Some(l + 1)),
            other => other,
        })?;
        let p = t_by[l].len() as f64 / n;
        beta[0] += p * b[0];
        beta[1] += p * b[1];
    }
    Ok(beta)
}

#[cfg(test)]
use crate::oracle;
