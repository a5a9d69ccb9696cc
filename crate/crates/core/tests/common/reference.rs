//! Second, independent implementation of every estimator, written from the
//! published reference-code algebra on plain vectors with Gauss-Jordan
//! solves. Shares no code with the library.

use super::oracle::{self, Mat};

pub struct RefPropensity {
    pub alpha: Vec<f64>,
    pub s2: f64,
    pub mu: f64,
    pub su2: f64,
    pub m: Vec<f64>,
}

fn ztilde(z: &[Vec<f64>]) -> Mat {
    z.iter()
        .map(|r| {
            let mut v = vec![1.0];
            v.extend(r);
            v
        })
        .collect()
}

pub fn propensity(z: &[Vec<f64>], t: &[f64]) -> RefPropensity {
    let n = t.len() as f64;
    let zt = ztilde(z);
    let alpha = oracle::ols(&zt, t).unwrap();
    let m: Vec<f64> = oracle::matvec(&zt, &alpha);
    let rss: f64 = t.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum();
    let s2 = rss / (n - alpha.len() as f64);
    let mu = t.iter().sum::<f64>() / n;
    let su2 = t.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0);
    RefPropensity { alpha, s2, mu, su2, m }
}

pub fn dnorm(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

pub fn weights(t: &[f64], ps: &RefPropensity) -> Vec<f64> {
    t.iter()
        .zip(&ps.m)
        .map(|(&ti, &mi)| dnorm(ti, ps.mu, ps.su2) / dnorm(ti, mi, ps.s2))
        .collect()
}

/// Weight as a function of `gamma = (mu, su2, alpha.., s2)`.
pub fn weight_of_gamma(t: f64, z: &[f64], gamma: &[f64]) -> f64 {
    let k = gamma.len();
    let mut m = gamma[2];
    for (j, zj) in z.iter().enumerate() {
        m += gamma[3 + j] * zj;
    }
    dnorm(t, gamma[0], gamma[1]) / dnorm(t, m, gamma[k - 1])
}

pub fn gamma(ps: &RefPropensity) -> Vec<f64> {
    let mut g = vec![ps.mu, ps.su2];
    g.extend(&ps.alpha);
    g.push(ps.s2);
    g
}

/// `dw` exactly as in the reference code.
pub fn dw(z: &[Vec<f64>], t: &[f64], w: &[f64], ps: &RefPropensity) -> Mat {
    let zt = ztilde(z);
    (0..t.len())
        .map(|i| {
            let mut r = vec![
                (t[i] - ps.mu) / ps.su2,
                (((t[i] - ps.mu) / ps.su2.sqrt()).powi(2) - 1.0) / (2.0 * ps.su2),
            ];
            for v in &zt[i] {
                r.push(-(t[i] - ps.m[i]) / ps.s2 * v);
            }
            r.push(-(((t[i] - ps.m[i]) / ps.s2.sqrt()).powi(2) - 1.0) / (2.0 * ps.s2));
            r.into_iter().map(|v| v * w[i]).collect()
        })
        .collect()
}

/// Central finite-difference gradient of every weight.
pub fn dw_finite_difference(z: &[Vec<f64>], t: &[f64], ps: &RefPropensity) -> Mat {
    let g = gamma(ps);
    (0..t.len())
        .map(|i| {
            (0..g.len())
                .map(|c| {
                    let h = 1e-6 * g[c].abs().max(1e-2);
                    let mut up = g.clone();
                    let mut dn = g.clone();
                    up[c] += h;
                    dn[c] -= h;
                    (weight_of_gamma(t[i], &z[i], &up) - weight_of_gamma(t[i], &z[i], &dn)) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}

pub fn weighted_beta(t: &[f64], y: &[f64], w: &[f64]) -> Vec<f64> {
    oracle::wls(&oracle::design_1t(t), y, w).unwrap()
}

pub fn scale(a: &Mat, s: f64) -> Mat {
    a.iter().map(|r| r.iter().map(|v| v * s).collect()).collect()
}

/// `A^-1 M A^-1 / n` with fixed weights.
pub fn sandwich(t: &[f64], y: &[f64], w: &[f64]) -> Mat {
    let n = t.len() as f64;
    let beta = weighted_beta(t, y, w);
    let mut a = vec![vec![0.0; 2]; 2];
    let mut m = vec![vec![0.0; 2]; 2];
    for i in 0..t.len() {
        let x = [1.0, t[i]];
        let e = y[i] - beta[0] - beta[1] * t[i];
        for r in 0..2 {
            for c in 0..2 {
                a[r][c] += w[i] * x[r] * x[c] / n;
                m[r][c] += w[i] * w[i] * e * e * x[r] * x[c] / n;
            }
        }
    }
    let ai = oracle::gauss_jordan_inverse(&a).unwrap();
    scale(&oracle::matmul(&oracle::matmul(&ai, &m), &ai), 1.0 / n)
}

/// Textbook HC0: `(X'X)^-1 (sum e_i^2 x_i x_i') (X'X)^-1`.
pub fn hc0(t: &[f64], y: &[f64]) -> Mat {
    let x = oracle::design_1t(t);
    let beta = oracle::ols(&x, y).unwrap();
    let xtx = oracle::matmul(&oracle::transpose(&x), &x);
    let meat_rows: Mat = x
        .iter()
        .zip(y)
        .map(|(r, yi)| {
            let e = yi - beta[0] - beta[1] * r[1];
            r.iter().map(|v| v * e).collect()
        })
        .collect();
    let meat = oracle::matmul(&oracle::transpose(&meat_rows), &meat_rows);
    let inv = oracle::gauss_jordan_inverse(&xtx).unwrap();
    oracle::matmul(&oracle::matmul(&inv, &meat), &inv)
}

/// Linearized variables and covariance of the weighted estimator, given
/// the weight-gradient matrix to use.
pub fn linearized(z: &[Vec<f64>], t: &[f64], y: &[f64], ps: &RefPropensity, w: &[f64], dw: &Mat) -> (Mat, Mat) {
    let n = t.len();
    let nf = n as f64;
    let p = z[0].len();
    let k = p + 4;
    let beta = weighted_beta(t, y, w);
    let zt = ztilde(z);
    // A = colMeans(cbind(1, T, T, T^2) * w) filled column-major.
    let mut cm = [0.0; 4];
    for i in 0..n {
        let row = [1.0, t[i], t[i], t[i] * t[i]];
        for (c, v) in row.iter().enumerate() {
            cm[c] += v * w[i] / nf;
        }
    }
    let a = vec![vec![cm[0], cm[2]], vec![cm[1], cm[3]]];
    let sa = oracle::gauss_jordan_inverse(&a).unwrap();
    let h: Mat = (0..n)
        .map(|i| {
            let e = y[i] - beta[0] - beta[1] * t[i];
            vec![e, t[i] * e]
        })
        .collect();
    let f: Mat = (0..n)
        .map(|i| {
            let dm = t[i] - ps.mu;
            let dc = t[i] - ps.m[i];
            let mut r = vec![dm, dm * dm - (nf - 1.0) / nf * ps.su2];
            r.extend(zt[i].iter().map(|v| dc * v));
            r.push(dc * dc - (nf - (p + 1) as f64) / nf * ps.s2);
            r
        })
        .collect();
    let b = scale(&oracle::matmul(&oracle::transpose(&h), dw), 1.0 / nf);
    let mut c = vec![vec![0.0; k]; k];
    c[0][0] = 1.0;
    c[1][1] = (nf - 1.0) / nf;
    let mzz = scale(&oracle::matmul(&oracle::transpose(&zt), &zt), 1.0 / nf);
    for r in 0..=p {
        for s in 0..=p {
            c[2 + r][2 + s] = mzz[r][s];
        }
    }
    c[k - 1][k - 1] = (nf - (p + 1) as f64) / nf;
    let sc = oracle::gauss_jordan_inverse(&c).unwrap();
    let bsc = oracle::matmul(&b, &sc);
    let i_rows: Mat = (0..n)
        .map(|i| {
            let corr = oracle::matvec(&bsc, &f[i]);
            let inner = [h[i][0] * w[i] + corr[0], h[i][1] * w[i] + corr[1]];
            oracle::matvec(&sa, &inner)
        })
        .collect();
    let cov = oracle::centered_crossprod(&i_rows, nf * (nf - 1.0));
    (i_rows, cov)
}

/// Type-7 quantile by direct interpolation.
pub fn quantile7(v: &[f64], prob: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (s.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// `cut(m, quantile breaks, include.lowest = TRUE)`, strata numbered from 0.
pub fn strata(m: &[f64], l: usize) -> Vec<usize> {
    let cuts: Vec<f64> = (0..=l).map(|k| quantile7(m, k as f64 / l as f64)).collect();
    m.iter()
        .map(|&v| (1..=l).find(|&k| v <= cuts[k]).map(|k| k - 1).unwrap_or(l - 1))
        .collect()
}

pub struct RefStratified {
    pub beta: Vec<f64>,
    pub pooled_model: Mat,
    pub pooled_lin: Mat,
    /// Per stratum: the two linearized components per unit.
    pub lin_vars: Vec<Mat>,
}

/// Stratified estimator with both pooled variances (reference-code form).
pub fn stratified(t: &[f64], y: &[f64], m: &[f64], l: usize) -> RefStratified {
    let n = t.len() as f64;
    let cl = strata(m, l);
    let mut beta = vec![0.0; 2];
    let mut pm = vec![vec![0.0; 2]; 2];
    let mut pl = vec![vec![0.0; 2]; 2];
    let mut lin_vars = Vec::new();
    for s in 0..l {
        let idx: Vec<usize> = (0..t.len()).filter(|&i| cl[i] == s).collect();
        let ts: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let nk = ts.len() as f64;
        let pk = nk / n;
        let coefs = oracle::ols(&oracle::design_1t(&ts), &ys).unwrap();
        beta[0] += pk * coefs[0];
        beta[1] += pk * coefs[1];
        let cov = oracle::ols_model_cov(&ts, &ys);
        for r in 0..2 {
            for c in 0..2 {
                pm[r][c] += pk * pk * cov[r][c];
            }
        }
        let mhat = ts.iter().sum::<f64>() / nk;
        let shat = ts.iter().map(|v| (v - mhat).powi(2)).sum::<f64>() / (nk - 1.0);
        let u: Mat = ts
            .iter()
            .zip(&ys)
            .map(|(&ti, &yi)| {
                let e = yi - coefs[0] - coefs[1] * ti;
                vec![(1.0 / shat) * (shat + mhat * mhat - mhat * ti) * e, (1.0 / shat) * (ti - mhat) * e]
            })
            .collect();
        let cc = oracle::centered_crossprod(&u, nk * (nk - 1.0));
        for r in 0..2 {
            for c in 0..2 {
                pl[r][c] += pk * pk * cc[r][c];
            }
        }
        lin_vars.push(u);
    }
    RefStratified {
        beta,
        pooled_model: pm,
        pooled_lin: pl,
        lin_vars,
    }
}
