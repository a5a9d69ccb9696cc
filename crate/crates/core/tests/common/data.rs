//! Small synthetic datasets for oracle comparisons.

use gpsdrf::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Confounded data: `T` depends on `Z`, `Y` on `T` and `Z` with
/// heteroskedastic noise.
pub fn confounded(seed: u64, n: usize, p: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut z = Vec::with_capacity(n * p);
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let lin: f64 = row.iter().zip(&a).map(|(u, v)| u * v).sum();
        let ti = 0.5 + lin + rng.sample::<f64, _>(StandardNormal);
        let conf: f64 = row.iter().zip(&b).map(|(u, v)| u * v).sum();
        let e: f64 = rng.sample(StandardNormal);
        y.push(1.0 + 2.0 * ti + conf + (0.5 + 0.3 * ti.abs()) * e);
        t.push(ti);
        z.extend(row);
    }
    let names = (1..=p).map(|j| format!("Z{j}")).collect();
    Dataset::new(y, t, z, names).unwrap()
}

/// Same covariates and exposure with `Y = 3 T` exactly.
pub fn exact_line(seed: u64, n: usize, p: usize) -> Dataset {
    let d = confounded(seed, n, p);
    let y = d.t().iter().map(|t| 3.0 * t).collect();
    d.with_outcome(y).unwrap()
}

pub fn z_rows(d: &Dataset) -> Vec<Vec<f64>> {
    (0..d.n()).map(|i| d.z_row(i).to_vec()).collect()
}
