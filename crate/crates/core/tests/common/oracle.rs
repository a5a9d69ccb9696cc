//! Brute-force reference computations used only by tests.
//!
//! Everything here works on plain `Vec<f64>` rows with Gauss-Jordan
//! elimination and explicit loops, independent of the library's
//! Cholesky-based code paths.

pub type Mat = Vec<Vec<f64>>;

/// Solves `a x = b` by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_solve(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut aug: Mat = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    gauss_jordan_in_place(&mut aug, n)?;
    Some(aug.iter().map(|r| r[n]).collect())
}

/// Inverse by Gauss-Jordan on `[a | I]`.
pub fn gauss_jordan_inverse(a: &Mat) -> Option<Mat> {
    let n = a.len();
    let mut aug: Mat = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    gauss_jordan_in_place(&mut aug, n)?;
    Some(aug.into_iter().map(|r| r[n..].to_vec()).collect())
}

fn gauss_jordan_in_place(aug: &mut Mat, n: usize) -> Option<()> {
    let width = aug[0].len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))?;
        if aug[pivot][col].abs() < 1e-300 {
            return None;
        }
        aug.swap(col, pivot);
        let p = aug[col][col];
        for j in 0..width {
            aug[col][j] /= p;
        }
        for i in 0..n {
            if i != col {
                let f = aug[i][col];
                if f != 0.0 {
                    for j in 0..width {
                        aug[i][j] -= f * aug[col][j];
                    }
                }
            }
        }
    }
    Some(())
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let m = b[0].len();
    a.iter()
        .map(|row| {
            (0..m)
                .map(|j| row.iter().enumerate().map(|(k, v)| v * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
}

/// Weighted least squares of `y` on the columns of `x` (rows are units).
pub fn wls(x: &Mat, y: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let k = x[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for ((row, &yi), &wi) in x.iter().zip(y).zip(w) {
        for a in 0..k {
            xty[a] += wi * row[a] * yi;
            for b in 0..k {
                xtx[a][b] += wi * row[a] * row[b];
            }
        }
    }
    gauss_jordan_solve(&xtx, &xty)
}

pub fn ols(x: &Mat, y: &[f64]) -> Option<Vec<f64>> {
    wls(x, y, &vec![1.0; y.len()])
}

pub fn design_1t(t: &[f64]) -> Mat {
    t.iter().map(|&ti| vec![1.0, ti]).collect()
}

/// `sum_i v_i v_i^T / denom` for the centered `v_i`.
pub fn centered_crossprod(rows: &[Vec<f64>], denom: f64) -> Mat {
    let n = rows.len() as f64;
    let k = rows[0].len();
    let mean: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut out = vec![vec![0.0; k]; k];
    for r in rows {
        for a in 0..k {
            for b in 0..k {
                out[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    out
}

/// Classical OLS covariance `RSS/(n-2) (X'X)^-1` for `y` on `(1, t)`.
pub fn ols_model_cov(t: &[f64], y: &[f64]) -> Mat {
    let x = design_1t(t);
    let beta = ols(&x, y).unwrap();
    let rss: f64 = t.iter().zip(y).map(|(ti, yi)| (yi - beta[0] - beta[1] * ti).powi(2)).sum();
    let s2 = rss / (t.len() as f64 - 2.0);
    let inv = gauss_jordan_inverse(&matmul(&transpose(&x), &x)).unwrap();
    inv.iter().map(|r| r.iter().map(|v| v * s2).collect()).collect()
}

/// Marsaglia's series `Phi(x) = 1/2 + phi(x) (x + x^3/3 + x^5/15 + ...)`.
pub fn normal_cdf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    let mut k = 1.0;
    loop {
        k += 2.0;
        term *= x2 / k;
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
    }
    0.5 + sum * (-0.5 * x2).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        eps: f64,
        whole: f64,
        m: f64,
        fm: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, eps / 2.0, left, lm, flm, depth - 1)
            + rec(f, m, fm, b, fb, eps / 2.0, right, rm, frm, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, eps, whole, m, fm, 60)
}

pub fn rel_close(a: f64, b: f64, rel: f64, abs_floor: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs_floor
}
