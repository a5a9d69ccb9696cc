//! WebAssembly bindings for the browser demo. Every export returns a JSON
//! string; the `*_json` functions hold the logic and also run natively.

use gpsdrf::drf::DEFAULT_STRATA;
use gpsdrf::gps;
use gpsdrf::report::{self, EstimateOptions, EstimateReport};
use gpsdrf::seed::{rng_from_seed, sub_seed};
use gpsdrf::simulation::{self, DgpParams, MethodId, MetricRow, Scenario};
use gpsdrf::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Most points sent to the scatter plot.
const MAX_POINTS: usize = 400;
const HISTOGRAM_BINS: usize = 30;

#[derive(Serialize)]
pub struct FitDemo {
    pub truth: [f64; 2],
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub report: EstimateReport,
}

#[derive(Serialize)]
pub struct WeightProfile {
    pub r2: f64,
    pub fitted_r2: f64,
    /// Lower edge of each bin of `log10(w)`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub diagnostics: gps::WeightDiagnostics,
}

#[derive(Serialize)]
pub struct CoverageStudy {
    pub replicates: usize,
    pub rows: Vec<MetricRow>,
}

fn params(n: usize, r2: f64, sigma2_y: f64, beta1: f64) -> Result<DgpParams> {
    let p = DgpParams::table1(n, r2, sigma2_y, beta1);
    p.validate()?;
    Ok(p)
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Io(e.to_string()))
}

/// Draws one dataset and fits every estimator with every standard error.
pub fn fit_demo_json(n: usize, r2: f64, sigma2_y: f64, beta1: f64, n_boot: usize, seed: u64) -> Result<String> {
    let p = params(n, r2, sigma2_y, beta1)?;
    let d = simulation::generate_dataset(&p, &mut rng_from_seed(seed))?;
    let mut opts = EstimateOptions::new(sub_seed(seed, 1, 0));
    opts.n_boot = n_boot;
    opts.strata = DEFAULT_STRATA.min(n / 3);
    let rep = report::estimate(&d, &opts)?;
    let step = n.div_ceil(MAX_POINTS);
    let idx: Vec<usize> = (0..n).step_by(step).collect();
    json(&FitDemo {
        truth: [p.beta0, p.beta1],
        t: idx.iter().map(|&i| d.t()[i]).collect(),
        y: idx.iter().map(|&i| d.y()[i]).collect(),
        report: rep,
    })
}

/// Histogram of `log10` stabilized weights at a given confounding level.
pub fn weight_profile_json(n: usize, r2: f64, seed: u64) -> Result<String> {
    let p = params(n, r2, 0.5, 1.0)?;
    let d = simulation::generate_dataset(&p, &mut rng_from_seed(seed))?;
    let f = gps::fit_propensity(&d)?;
    let w = gps::weights(&d, &f)?;
    let logs: Vec<f64> = w.iter().map(|v| v.log10()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min).min(-1.0);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(1.0);
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for v in &logs {
        let b = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[b] += 1;
    }
    json(&WeightProfile {
        r2,
        fitted_r2: f.r2,
        edges: (0..HISTOGRAM_BINS).map(|b| lo + b as f64 * width).collect(),
        counts,
        diagnostics: gps::weight_diagnostics(&w, gps::DEFAULT_WEIGHT_THRESHOLD),
    })
}

/// Small Monte-Carlo study with every method on one scenario.
pub fn coverage_study_json(
    n: usize,
    r2: f64,
    sigma2_y: f64,
    replicates: usize,
    n_boot: usize,
    seed: u64,
) -> Result<String> {
    let mut s = Scenario::desk(n, r2, sigma2_y, 1.0, seed);
    s.replicates = replicates;
    s.empirical_replicates = (4 * replicates).max(2);
    s.bootstrap_count = n_boot;
    s.strata_count = DEFAULT_STRATA.min(n / 3);
    s.methods = MethodId::ALL.to_vec();
    let rows = simulation::run_scenario(&s)?;
    json(&CoverageStudy { replicates, rows })
}

fn to_js(r: Result<String>) -> std::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn fit_demo(n: usize, r2: f64, sigma2_y: f64, beta1: f64, n_boot: usize, seed: u32) -> std::result::Result<String, JsValue> {
    to_js(fit_demo_json(n, r2, sigma2_y, beta1, n_boot, seed as u64))
}

#[wasm_bindgen]
pub fn weight_profile(n: usize, r2: f64, seed: u32) -> std::result::Result<String, JsValue> {
    to_js(weight_profile_json(n, r2, seed as u64))
}

#[wasm_bindgen]
pub fn coverage_study(
    n: usize,
    r2: f64,
    sigma2_y: f64,
    replicates: usize,
    n_boot: usize,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    to_js(coverage_study_json(n, r2, sigma2_y, replicates, n_boot, seed as u64))
}
