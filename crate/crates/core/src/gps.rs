//! Normal-linear propensity model and stabilized GPS weights.
//!
//! The nuisance vector is `gamma = (mu_T, sigma2_T, alpha_0..alpha_p, sigma2)`
//! and the weight of unit `i` is the marginal exposure density over the
//! conditional one, both Gaussian:
//!
//! ```text
//! w_i(gamma) = f(T_i; mu_T, sigma2_T) / f(T_i; Z~_i' alpha, sigma2)
//! ```
//!
//! with `Z~_i = (1, Z_i)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numkit;

/// Below this `RSS / TSS` the propensity model interpolates the exposure and
/// the conditional density collapses.
const DEGENERATE_RSS_RATIO: f64 = 1e-14;

/// Fitted propensity model together with the marginal exposure moments.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityFit {
    /// Regression coefficients, intercept first (length `p + 1`).
    pub alpha: Vec<f64>,
    /// Residual variance, divisor `n - p - 1`.
    pub sigma2: f64,
    pub mu_t: f64,
    /// Exposure variance, divisor `n - 1`.
    pub sigma2_t: f64,
    /// `Z~_i' alpha` for every unit.
    pub linpred: Vec<f64>,
    pub r2: f64,
    gram: DMatrix<f64>,
}

impl PropensityFit {
    /// `sum_i Z~_i Z~_i'`, the propensity design Gram matrix.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gamma(&self) -> Gamma {
        Gamma {
            mu_t: self.mu_t,
            sigma2_t: self.sigma2_t,
            alpha: self.alpha.clone(),
            sigma2: self.sigma2,
        }
    }
}

/// Nuisance parameter vector in the fixed order
/// `(mu_T, sigma2_T, alpha_0..alpha_p, sigma2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gamma {
    pub mu_t: f64,
    pub sigma2_t: f64,
    pub alpha: Vec<f64>,
    pub sigma2: f64,
}

impl Gamma {
    pub fn len(&self) -> usize {
        self.alpha.len() + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.push(self.mu_t);
        v.push(self.sigma2_t);
        v.extend_from_slice(&self.alpha);
        v.push(self.sigma2);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < 4 {
            return Err(Error::DimensionMismatch(format!(
                "gamma needs at least 4 components, got {}",
                v.len()
            )));
        }
        Ok(Self {
            mu_t: v[0],
            sigma2_t: v[1],
            alpha: v[2..v.len() - 1].to_vec(),
            sigma2: v[v.len() - 1],
        })
    }

    fn linpred(&self, z: &[f64]) -> f64 {
        self.alpha[0] + self.alpha[1..].iter().zip(z).map(|(a, x)| a * x).sum::<f64>()
    }
}

/// Stabilized weight of a single unit at an arbitrary `gamma`.
///
/// Evaluated as a log-density difference so that units far in the tail of
/// the conditional density give large finite weights instead of `inf`.
pub fn weight_at(t: f64, z: &[f64], gamma: &Gamma) -> f64 {
    weight_from_linpred(t, gamma.linpred(z), gamma.mu_t, gamma.sigma2_t, gamma.sigma2)
}

#[inline]
fn weight_from_linpred(t: f64, linpred: f64, mu_t: f64, sigma2_t: f64, sigma2: f64) -> f64 {
    let dm = t - mu_t;
    let dc = t - linpred;
    let log_w = 0.5 * (sigma2 / sigma2_t).ln() - 0.5 * dm * dm / sigma2_t + 0.5 * dc * dc / sigma2;
    log_w.exp()
}

/// Least-squares fit of `T` on `(1, Z)` plus the marginal mean and variance
/// of `T`.
pub fn fit_propensity(d: &Dataset) -> Result<PropensityFit> {
    let n = d.n();
    let p = d.p();
    let k = p + 1;
    if n < p + 2 {
        return Err(Error::TooFewRows { n, p, required: p + 3 });
    }
    let t = d.t();
    let nf = n as f64;
    let mu_t = t.iter().sum::<f64>() / nf;
    let tss: f64 = t.iter().map(|v| (v - mu_t) * (v - mu_t)).sum();
    if tss == 0.0 || t.iter().all(|&v| v == t[0]) {
        return Err(Error::ZeroExposureVariance(None));
    }

    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    let mut zt = vec![0.0; k];
    zt[0] = 1.0;
    for i in 0..n {
        zt[1..].copy_from_slice(d.z_row(i));
        let ti = t[i];
        for a in 0..k {
            let za = zt[a];
            rhs[a] += za * ti;
            let row = &mut gram[a * k..(a + 1) * k];
            for b in a..k {
                row[b] += za * zt[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[a * k + b] = gram[b * k + a];
        }
    }
    let gram = DMatrix::from_row_slice(k, k, &gram);
    let alpha = numkit::solve_spd_vec(&gram, &DVector::from_vec(rhs))?;
    let alpha: Vec<f64> = alpha.iter().copied().collect();

    let linpred: Vec<f64> = (0..n)
        .map(|i| alpha[0] + alpha[1..].iter().zip(d.z_row(i)).map(|(a, z)| a * z).sum::<f64>())
        .collect();
    let rss: f64 = t.iter().zip(&linpred).map(|(ti, m)| (ti - m) * (ti - m)).sum();
    if rss <= DEGENERATE_RSS_RATIO * tss {
        return Err(Error::DegenerateFit(format!(
            "propensity model reproduces the exposure (RSS/TSS = {:.3e})",
            rss / tss
        )));
    }
    Ok(PropensityFit {
        alpha,
        sigma2: rss / (n - p - 1) as f64,
        mu_t,
        sigma2_t: tss / (nf - 1.0),
        linpred,
        r2: 1.0 - rss / tss,
        gram,
    })
}

/// Stabilized weights and their gradients with respect to `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub w: Vec<f64>,
    /// `n x (p + 4)`; row `i` is the gradient of `w_i` at the fitted `gamma`,
    /// ordered like [`Gamma::to_vec`].
    pub grad_w: DMatrix<f64>,
}

fn check_variances(f: &PropensityFit) -> Result<()> {
    if !(f.sigma2 > 0.0) || !(f.sigma2_t > 0.0) {
        return Err(Error::DegenerateFit(format!(
            "non-positive variance (sigma2 = {}, sigma2_T = {})",
            f.sigma2, f.sigma2_t
        )));
    }
    Ok(())
}

/// Weights only, for callers that never need the gradient (bootstrap).
pub fn weights(d: &Dataset, f: &PropensityFit) -> Result<Vec<f64>> {
    check_variances(f)?;
    let w: Vec<f64> = d
        .t()
        .iter()
        .zip(&f.linpred)
        .map(|(&t, &m)| weight_from_linpred(t, m, f.mu_t, f.sigma2_t, f.sigma2))
        .collect();
    if let Some(i) = w.iter().position(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::DegenerateFit(format!("weight of row {} is {}", i + 1, w[i])));
    }
    Ok(w)
}

/// Weights at the fitted `gamma` and the analytic gradient
///
/// ```text
/// grad w_i = w_i ( (T_i - mu_T) / sigma2_T,
///                  ((T_i - mu_T)^2 / sigma2_T - 1) / (2 sigma2_T),
///                  -Z~_i (T_i - Z~_i' alpha) / sigma2,
///                  -((T_i - Z~_i' alpha)^2 / sigma2 - 1) / (2 sigma2) )
/// ```
pub fn stabilized_weights(d: &Dataset, f: &PropensityFit) -> Result<WeightSet> {
    let w = weights(d, f)?;
    let p = d.p();
    let n = d.n();
    let cols = p + 4;
    let mut grad = DMatrix::zeros(n, cols);
    for i in 0..n {
        let t = d.t()[i];
        let wi = w[i];
        let dm = t - f.mu_t;
        let dc = t - f.linpred[i];
        grad[(i, 0)] = wi * dm / f.sigma2_t;
        grad[(i, 1)] = wi * (dm * dm / f.sigma2_t - 1.0) / (2.0 * f.sigma2_t);
        let s = -wi * dc / f.sigma2;
        grad[(i, 2)] = s;
        for (j, z) in d.z_row(i).iter().enumerate() {
            grad[(i, 3 + j)] = s * z;
        }
        grad[(i, cols - 1)] = -wi * (dc * dc / f.sigma2 - 1.0) / (2.0 * f.sigma2);
    }
    Ok(WeightSet { w, grad_w: grad })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightDiagnostics {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Standard deviation (divisor `n - 1`) over the mean; 0 when `n < 2`.
    pub cv: f64,
    pub threshold: f64,
    pub count_above: usize,
}

pub const DEFAULT_WEIGHT_THRESHOLD: f64 = 10.0;

pub fn weight_diagnostics(w: &[f64], threshold: f64) -> WeightDiagnostics {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let cv = if w.len() < 2 {
        0.0
    } else {
        (w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt() / mean
    };
    WeightDiagnostics {
        min: w.iter().copied().fold(f64::INFINITY, f64::min),
        max: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        cv,
        threshold,
        count_above: w.iter().filter(|&&v| v > threshold).count(),
    }
}

/// Caps weights at the given upper percentile (in `(0, 100]`). Used only on
/// explicit request; the estimators never truncate on their own.
pub fn truncate_weights(w: &[f64], percentile: f64) -> Result<Vec<f64>> {
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation percentile {percentile} outside (0, 100]"
        )));
    }
    let cap = numkit::quantiles(w, &[percentile / 100.0])?[0];
    Ok(w.iter().map(|&v| v.min(cap)).collect())
}

#[cfg(test)]
use crate::oracle;
