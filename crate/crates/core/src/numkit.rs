//! Dense linear algebra and distribution primitives shared by the estimators.
//!
//! Matrices here are small (at most `p + 4` on a side), so everything goes
//! through `nalgebra`'s dynamic matrices and its Cholesky factorization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Matrices whose estimated reciprocal condition number falls below this are
/// treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-12;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Cholesky factorization with a collinearity check.
///
/// The reciprocal condition estimate is taken on the unit-diagonal rescaling
/// of `a`: `min_i L_ii^2 / a_ii`, i.e. one minus the largest squared multiple
/// correlation of a column on the preceding ones. Pure scale differences
/// between columns therefore do not trip the threshold.
pub fn cholesky(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix { rcond: f64::NAN });
    }
    let chol = Cholesky::new(a.clone()).ok_or(Error::SingularMatrix { rcond: 0.0 })?;
    let rcond = rcond_estimate(a, chol.l_dirty());
    if !(rcond >= RCOND_THRESHOLD) {
        return Err(Error::SingularMatrix { rcond });
    }
    Ok(chol)
}

fn rcond_estimate(a: &DMatrix<f64>, l: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| {
            let d = l[(i, i)];
            d * d / a[(i, i)]
        })
        .fold(f64::INFINITY, f64::min)
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has {} rows, matrix is {}x{}",
            b.nrows(),
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(cholesky(a)?.solve(b))
}

/// Vector right-hand side variant of [`solve_spd`].
pub fn solve_spd_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has length {}, matrix is {}x{}",
            b.len(),
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(cholesky(a)?.solve(b))
}

/// Gaussian density with the given mean and variance.
pub fn normal_pdf(x: f64, mean: f64, variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::NonPositiveVariance(variance));
    }
    Ok(normal_pdf_unchecked(x, mean, variance))
}

#[inline]
pub(crate) fn normal_pdf_unchecked(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    FRAC_1_SQRT_2PI / variance.sqrt() * (-0.5 * d * d / variance).exp()
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Sample quantiles by linear interpolation between order statistics: the
/// `k`-th smallest value (1-based) sits at probability `(k - 1) / (n - 1)`.
pub fn quantiles(values: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN in quantile input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(probs.iter().map(|&p| quantile_sorted(&sorted, p)).collect())
}

pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Multivariate normal sampler holding the lower Cholesky factor of the
/// covariance. Each draw is `mean + L z` with `z` iid standard normal.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: Vec<f64>,
    lower: DMatrix<f64>,
}

impl MvnSampler {
    pub fn new(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let lower = cholesky(cov)?.unpack();
        Ok(Self {
            mean: mean.to_vec(),
            lower,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Writes one draw into `out`; `scratch` must have length `dim()`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut [f64], out: &mut [f64]) {
        let d = self.dim();
        for s in scratch.iter_mut() {
            *s = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut acc = self.mean[i];
            for j in 0..=i {
                acc += self.lower[(i, j)] * scratch[j];
            }
            out[i] = acc;
        }
    }
}

/// `count` draws from `N(mean, cov)`, one per row.
pub fn mvn_sample<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &[f64],
    cov: &DMatrix<f64>,
    count: usize,
) -> Result<DMatrix<f64>> {
    let sampler = MvnSampler::new(mean, cov)?;
    let d = sampler.dim();
    let mut out = DMatrix::zeros(count, d);
    let mut scratch = vec![0.0; d];
    let mut row = vec![0.0; d];
    for r in 0..count {
        sampler.sample_into(rng, &mut scratch, &mut row);
        for (c, v) in row.iter().enumerate() {
            out[(r, c)] = *v;
        }
    }
    Ok(out)
}

#[cfg(test)]
use crate::oracle;
