//! Monte-Carlo study: confounded data generation, replicate management and
//! the bias / RMSE / variability-ratio / coverage metrics.
//!
//! Data-generating process with `K` covariates:
//!
//! ```text
//! [Z_1..Z_K, Z_U] ~ N(0, Sigma),  Sigma = I with Cov(Z_k, Z_U) = sigma_k
//! U = Phi(Z_U)
//! T = alpha_0 + sum_k alpha_k Z_k + eta,   eta ~ N(0, sigma2)
//! sigma2 = (sum_k alpha_k^2) (1 - R2) / R2
//! Y = beta_0 + beta_1 T + sigma2_Y * U
//! ```
//!
//! Only `Z_1..Z_K` are exposed as covariates. The outcome multiplies `U` by
//! `sigma2_Y` itself, not by its square root.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::drf::{self, DrfMethod, DEFAULT_STRATA};
use crate::error::{Error, Result};
use crate::gps;
use crate::numkit::{self, MvnSampler};
use crate::par;
use crate::seed::{self, rng_from_seed, sub_seed};
use crate::variance::{self, BootstrapTarget, VarianceMethod, Z_95};

/// Propensity coefficients `alpha_1..alpha_10` of the reference design.
pub const TABLE1_ALPHA: [f64; 10] = [1.0, 1.5, 2.0, 3.0, -2.0, -2.0, 1.0, 1.5, 2.0, 3.0];
/// Covariances `sigma_1..sigma_10` between each `Z_k` and `Z_U`.
pub const TABLE1_SIGMA: [f64; 10] = [0.2, 0.3, -0.4, -0.3, -0.2, 0.15, 0.2, -0.2, -0.2, 0.2];

/// Desk-scale defaults.
pub const DEFAULT_REPLICATES: usize = 200;
pub const DEFAULT_EMPIRICAL_REPLICATES: usize = 1000;
pub const DEFAULT_BOOTSTRAP: usize = 200;
/// Full-scale counts used for published-size runs.
pub const FULL_REPLICATES: usize = 1000;
pub const FULL_EMPIRICAL_REPLICATES: usize = 10_000;

/// A method fails the scenario if more than this fraction of its replicates
/// error out.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    pub alpha: Vec<f64>,
    pub sigma_u: Vec<f64>,
    pub alpha0: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub r2_target: f64,
    pub sigma2_y: f64,
    pub n: usize,
}

impl DgpParams {
    /// Reference design (`K = 10`, `alpha_0 = beta_0 = 0`).
    pub fn table1(n: usize, r2_target: f64, sigma2_y: f64, beta1: f64) -> Self {
        Self {
            alpha: TABLE1_ALPHA.to_vec(),
            sigma_u: TABLE1_SIGMA.to_vec(),
            alpha0: 0.0,
            beta0: 0.0,
            beta1,
            r2_target,
            sigma2_y,
            n,
        }
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    /// Variance of the propensity noise implied by the target `R2`.
    pub fn noise_variance(&self) -> f64 {
        let signal: f64 = self.alpha.iter().map(|a| a * a).sum();
        signal * (1.0 - self.r2_target) / self.r2_target
    }

    /// `(K+1) x (K+1)` covariance of `(Z_1..Z_K, Z_U)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut s = DMatrix::identity(k + 1, k + 1);
        for (j, &c) in self.sigma_u.iter().enumerate() {
            s[(j, k)] = c;
            s[(k, j)] = c;
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.alpha.len() != self.sigma_u.len() {
            return Err(Error::InvalidArgument(format!(
                "need matching non-empty alpha and sigma vectors, got {} and {}",
                self.alpha.len(),
                self.sigma_u.len()
            )));
        }
        if !(self.r2_target > 0.0 && self.r2_target < 1.0) {
            return Err(Error::InvalidArgument(format!("R2 target {} outside (0, 1)", self.r2_target)));
        }
        if !(self.sigma2_y > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma2_Y must be positive, got {}", self.sigma2_y)));
        }
        if !(self.noise_variance() > 0.0) {
            return Err(Error::InvalidArgument("all propensity coefficients are zero".into()));
        }
        if self.sigma_u.iter().map(|s| s * s).sum::<f64>() >= 1.0 {
            return Err(Error::SingularMatrix { rcond: 0.0 });
        }
        if self.n < self.k() + 3 {
            return Err(Error::TooFewRows { n: self.n, p: self.k(), required: self.k() + 3 });
        }
        Ok(())
    }
}

/// A generated dataset together with its hidden confounder.
#[derive(Debug, Clone)]
pub struct LatentDraw {
    pub data: Dataset,
    pub z_u: Vec<f64>,
    pub u: Vec<f64>,
}

pub fn generate_with_latent<R: Rng + ?Sized>(p: &DgpParams, rng: &mut R) -> Result<LatentDraw> {
    p.validate()?;
    let k = p.k();
    let sampler = MvnSampler::new(&vec![0.0; k + 1], &p.covariance())?;
    let sd_eta = p.noise_variance().sqrt();
    let n = p.n;
    let mut z = Vec::with_capacity(n * k);
    let (mut t, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut z_u, mut u) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut scratch = vec![0.0; k + 1];
    let mut draw = vec![0.0; k + 1];
    for _ in 0..n {
        sampler.sample_into(rng, &mut scratch, &mut draw);
        let ui = numkit::normal_cdf(draw[k]);
        let eta: f64 = rng.sample::<f64, _>(StandardNormal) * sd_eta;
        let ti = p.alpha0 + p.alpha.iter().zip(&draw[..k]).map(|(a, z)| a * z).sum::<f64>() + eta;
        z.extend_from_slice(&draw[..k]);
        t.push(ti);
        y.push(p.beta0 + p.beta1 * ti + p.sigma2_y * ui);
        z_u.push(draw[k]);
        u.push(ui);
    }
    let names = (1..=k).map(|j| format!("Z{j}")).collect();
    Ok(LatentDraw {
        data: Dataset::new(y, t, z, names)?,
        z_u,
        u,
    })
}

pub fn generate_dataset<R: Rng + ?Sized>(p: &DgpParams, rng: &mut R) -> Result<Dataset> {
    Ok(generate_with_latent(p, rng)?.data)
}

/// The seven estimator / variance combinations of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    NaiveModelBased,
    WeightedSandwich,
    WeightedLinearized,
    WeightedBootstrap,
    StratifiedPooledModelBased,
    StratifiedPooledLinearized,
    StratifiedBootstrap,
}

impl MethodId {
    pub const ALL: [MethodId; 7] = [
        MethodId::NaiveModelBased,
        MethodId::WeightedSandwich,
        MethodId::WeightedLinearized,
        MethodId::WeightedBootstrap,
        MethodId::StratifiedPooledModelBased,
        MethodId::StratifiedPooledLinearized,
        MethodId::StratifiedBootstrap,
    ];

    pub fn estimator(self) -> DrfMethod {
        match self {
            MethodId::NaiveModelBased => DrfMethod::Naive,
            MethodId::WeightedSandwich | MethodId::WeightedLinearized | MethodId::WeightedBootstrap => {
                DrfMethod::Weighted
            }
            _ => DrfMethod::Stratified,
        }
    }

    pub fn variance(self) -> VarianceMethod {
        match self {
            MethodId::NaiveModelBased => VarianceMethod::ModelBased,
            MethodId::WeightedSandwich => VarianceMethod::Sandwich,
            MethodId::WeightedLinearized => VarianceMethod::Linearized,
            MethodId::StratifiedPooledModelBased => VarianceMethod::PooledModelBased,
            MethodId::StratifiedPooledLinearized => VarianceMethod::PooledLinearized,
            MethodId::WeightedBootstrap | MethodId::StratifiedBootstrap => VarianceMethod::Bootstrap,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodId::NaiveModelBased => "naive_model_based",
            MethodId::WeightedSandwich => "weighted_sandwich",
            MethodId::WeightedLinearized => "weighted_linearized",
            MethodId::WeightedBootstrap => "weighted_bootstrap",
            MethodId::StratifiedPooledModelBased => "stratified_pooled_model_based",
            MethodId::StratifiedPooledLinearized => "stratified_pooled_linearized",
            MethodId::StratifiedBootstrap => "stratified_bootstrap",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub dgp: DgpParams,
    /// `B`, replicate datasets on which every method is evaluated.
    pub replicates: usize,
    pub bootstrap_count: usize,
    pub strata_count: usize,
    pub methods: Vec<MethodId>,
    pub master_seed: u64,
    /// `B'`, independent datasets for the empirical standard deviation.
    pub empirical_replicates: usize,
}

impl Scenario {
    /// Desk-scale scenario on the reference design with every method.
    pub fn desk(n: usize, r2: f64, sigma2_y: f64, beta1: f64, master_seed: u64) -> Self {
        Self {
            dgp: DgpParams::table1(n, r2, sigma2_y, beta1),
            replicates: DEFAULT_REPLICATES,
            bootstrap_count: DEFAULT_BOOTSTRAP,
            strata_count: DEFAULT_STRATA,
            methods: MethodId::ALL.to_vec(),
            master_seed,
            empirical_replicates: DEFAULT_EMPIRICAL_REPLICATES,
        }
    }

    /// Stable identifier built from the grid coordinates.
    pub fn id(&self) -> String {
        format!(
            "n{}_r2-{}_s2y-{}_b1-{}_L{}",
            self.dgp.n, self.dgp.r2_target, self.dgp.sigma2_y, self.dgp.beta1, self.strata_count
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.replicates < 2 || self.empirical_replicates < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 replicates and 2 empirical replicates, got {} and {}",
                self.replicates, self.empirical_replicates
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods selected".into()));
        }
        let needs_boot = self.methods.iter().any(|m| m.variance() == VarianceMethod::Bootstrap);
        if needs_boot && self.bootstrap_count < 2 {
            return Err(Error::InvalidArgument("bootstrap count must be at least 2".into()));
        }
        if self.strata_count == 0 || self.dgp.n < 3 * self.strata_count {
            return Err(Error::InvalidArgument(format!(
                "{} strata do not fit n = {}",
                self.strata_count, self.dgp.n
            )));
        }
        Ok(())
    }

    fn estimators(&self) -> Vec<DrfMethod> {
        let mut out: Vec<DrfMethod> = Vec::new();
        for m in &self.methods {
            if !out.contains(&m.estimator()) {
                out.push(m.estimator());
            }
        }
        out
    }
}

/// Point estimate and standard errors of one method on one dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOutcome {
    pub beta: [f64; 2],
    pub se: [f64; 2],
}

/// Evaluation settings handed to a [`ReplicateEvaluator`].
#[derive(Debug, Clone, Copy)]
pub struct ReplicateContext {
    /// Seed of the replicate's dataset; bootstrap streams hang off it.
    pub seed: u64,
    pub bootstrap_count: usize,
    pub strata_count: usize,
}

/// What a replicate runs. [`StandardEvaluator`] is the real pipeline; tests
/// substitute their own to exercise the aggregation.
pub trait ReplicateEvaluator: Sync {
    fn evaluate(&self, d: &Dataset, methods: &[MethodId], ctx: &ReplicateContext) -> Vec<Result<MethodOutcome>>;

    fn point_estimate(&self, d: &Dataset, estimator: DrfMethod, strata_count: usize) -> Result<[f64; 2]>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StandardEvaluator;

impl ReplicateEvaluator for StandardEvaluator {
    fn evaluate(&self, d: &Dataset, methods: &[MethodId], ctx: &ReplicateContext) -> Vec<Result<MethodOutcome>> {
        evaluate_methods(d, methods, ctx)
    }

    fn point_estimate(&self, d: &Dataset, estimator: DrfMethod, strata_count: usize) -> Result<[f64; 2]> {
        match estimator {
            DrfMethod::Naive => Ok(drf::fit_naive(d)?.beta),
            DrfMethod::Weighted => variance::pipeline_beta(d, BootstrapTarget::Weighted),
            DrfMethod::Stratified => variance::pipeline_beta(d, BootstrapTarget::Stratified { l_count: strata_count }),
        }
    }
}

/// Runs each requested method on `d`, sharing the propensity fit and the
/// point estimates between methods of the same estimator.
pub fn evaluate_methods(d: &Dataset, methods: &[MethodId], ctx: &ReplicateContext) -> Vec<Result<MethodOutcome>> {
    let has = |e: DrfMethod| methods.iter().any(|m| m.estimator() == e);
    let naive = has(DrfMethod::Naive).then(|| drf::fit_naive(d));
    let propensity = (has(DrfMethod::Weighted) || has(DrfMethod::Stratified)).then(|| gps::fit_propensity(d));
    let need_grad = methods.contains(&MethodId::WeightedLinearized);
    let weighted = has(DrfMethod::Weighted).then(|| {
        let f = propensity.as_ref().unwrap().as_ref().map_err(Clone::clone)?;
        let ws = if need_grad {
            gps::stabilized_weights(d, f)?
        } else {
            gps::WeightSet {
                w: gps::weights(d, f)?,
                grad_w: DMatrix::zeros(0, 0),
            }
        };
        let fit = drf::fit_weighted(d, &ws)?;
        Ok::<_, Error>((ws, fit))
    });
    let stratified = has(DrfMethod::Stratified).then(|| {
        let f = propensity.as_ref().unwrap().as_ref().map_err(Clone::clone)?;
        drf::fit_stratified(d, f, ctx.strata_count)
    });

    methods
        .iter()
        .map(|&m| {
            let with = |beta: [f64; 2], est: variance::VarianceEstimate| MethodOutcome { beta, se: est.se() };
            match m {
                MethodId::NaiveModelBased => {
                    let fit = naive.as_ref().unwrap().as_ref().map_err(Clone::clone)?;
                    Ok(with(fit.beta, variance::var_model_based(d, fit)?))
                }
                MethodId::WeightedSandwich => {
                    let (ws, fit) = weighted.as_ref().unwrap().as_ref().map_err(Clone::clone)?;
                    Ok(with(fit.beta, variance::var_sandwich_weighted(d, ws, fit)?))
                }
                MethodId::WeightedLinearized => {
                    let (ws, fit) = weighted.as_ref().unwrap().as_ref().map_err(Clone::clone)?;
                    let f = propensity.as_ref().unwrap().as_ref().map_err(Clone::clone)?;
                    Ok(with(fit.beta, variance::linearized_weighted(d, f, ws, fit)?.1))
                }
                MethodId::WeightedBootstrap => {
                    let (_, fit) = weighted.as_ref().unwrap().as_ref().map_err(Clone::clone)?;
                    let seed = sub_seed(ctx.seed, seed::TAG_BOOT_WEIGHTED, 0);
                    let v = variance::var_bootstrap(d, BootstrapTarget::Weighted, ctx.bootstrap_count, seed)?;
                    Ok(with(fit.beta, v))
                }
                MethodId::StratifiedPooledModelBased => {
                    let fit = stratified.as_ref().unwrap().as_ref().map_err(Clone::clone)?;
                    Ok(with(fit.beta, variance::pooled_model_based(d, fit)?))
                }
                MethodId::StratifiedPooledLinearized => {
                    let fit = stratified.as_ref().unwrap().as_ref().map_err(Clone::clone)?;
                    Ok(with(fit.beta, variance::pooled_linearized(d, fit)?.1))
                }
                MethodId::StratifiedBootstrap => {
                    let fit = stratified.as_ref().unwrap().as_ref().map_err(Clone::clone)?;
                    let seed = sub_seed(ctx.seed, seed::TAG_BOOT_STRATIFIED, 0);
                    let target = BootstrapTarget::Stratified { l_count: ctx.strata_count };
                    let v = variance::var_bootstrap(d, target, ctx.bootstrap_count, seed)?;
                    Ok(with(fit.beta, v))
                }
            }
        })
        .collect()
}

/// One row of the results table: one method, one coefficient, one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scenario: String,
    pub n: usize,
    pub r2: f64,
    pub sigma2_y: f64,
    pub beta1_true: f64,
    pub method: MethodId,
    /// `"beta0"` or `"beta1"`.
    pub parameter: String,
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    pub mean_se: f64,
    pub empirical_sd: f64,
    /// `None` when the empirical standard deviation is zero.
    pub variability_ratio: Option<f64>,
    pub coverage: f64,
    /// Replicates that produced an estimate.
    pub replicates: usize,
    pub failures: usize,
}

/// Aggregate metrics of one coefficient; see [`metric_formulas`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub bias: f64,
    pub rmse: f64,
    pub mean_se: f64,
    pub variability_ratio: Option<f64>,
    pub coverage: f64,
}

fn compute_metrics(estimates: &[f64], ses: &[f64], truth: f64, empirical_sd: f64) -> Result<Metrics> {
    if estimates.len() != ses.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates but {} standard errors",
            estimates.len(),
            ses.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::EmptyInput);
    }
    let b = estimates.len() as f64;
    let bias = estimates.iter().map(|e| e - truth).sum::<f64>() / b;
    let rmse = (estimates.iter().map(|e| (e - truth) * (e - truth)).sum::<f64>() / b).sqrt();
    let mean_se = ses.iter().sum::<f64>() / b;
    let covered = estimates
        .iter()
        .zip(ses)
        .filter(|(e, s)| (*e - truth).abs() <= Z_95 * **s)
        .count();
    Ok(Metrics {
        bias,
        rmse,
        mean_se,
        variability_ratio: (empirical_sd > 0.0).then(|| mean_se / empirical_sd),
        coverage: covered as f64 / b,
    })
}

/// Bias `mean(est) - truth`, RMSE `sqrt(mean((est - truth)^2))`, mean SE,
/// variability ratio `mean_se / empirical_sd` and the fraction of Wald
/// intervals `est +/- 1.96 se` that contain `truth`.
pub fn metric_formulas(estimates: &[f64], ses: &[f64], truth: f64, empirical_sd: f64) -> Result<Metrics> {
    if estimates.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 estimates".into()));
    }
    if empirical_sd == 0.0 {
        return Err(Error::DegenerateEmpiricalSd);
    }
    compute_metrics(estimates, ses, truth, empirical_sd)
}

/// Sample standard deviation (divisor `len - 1`).
pub fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Raw per-replicate output of a scenario, before aggregation.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    /// `outcomes[b][m]` for replicate `b` and `scenario.methods[m]`.
    pub outcomes: Vec<Vec<Result<MethodOutcome>>>,
    /// Point estimates on the independent stream, per estimator.
    pub empirical: Vec<(DrfMethod, Vec<Result<[f64; 2]>>)>,
}

pub fn run_scenario(s: &Scenario) -> Result<Vec<MetricRow>> {
    run_scenario_with(s, &StandardEvaluator)
}

pub fn run_scenario_with(s: &Scenario, evaluator: &dyn ReplicateEvaluator) -> Result<Vec<MetricRow>> {
    let run = simulate_replicates(s, evaluator)?;
    aggregate(s, &run)
}

/// Generates and evaluates every replicate. Replicate `b` uses the dataset
/// seed `sub_seed(master, TAG_REPLICATE, b)`; the empirical stream uses
/// `TAG_EMPIRICAL`. Results are index-ordered.
pub fn simulate_replicates(s: &Scenario, evaluator: &dyn ReplicateEvaluator) -> Result<ScenarioRun> {
    s.validate()?;
    let outcomes = par::map_indexed(s.replicates, |b| {
        let seed = sub_seed(s.master_seed, seed::TAG_REPLICATE, b as u64);
        let ctx = ReplicateContext {
            seed,
            bootstrap_count: s.bootstrap_count,
            strata_count: s.strata_count,
        };
        match generate_dataset(&s.dgp, &mut rng_from_seed(seed)) {
            Ok(d) => evaluator.evaluate(&d, &s.methods, &ctx),
            Err(e) => s.methods.iter().map(|_| Err(e.clone())).collect(),
        }
    });
    let estimators = s.estimators();
    let points = par::map_indexed(s.empirical_replicates, |b| {
        let seed = sub_seed(s.master_seed, seed::TAG_EMPIRICAL, b as u64);
        match generate_dataset(&s.dgp, &mut rng_from_seed(seed)) {
            Ok(d) => estimators
                .iter()
                .map(|&e| evaluator.point_estimate(&d, e, s.strata_count))
                .collect::<Vec<_>>(),
            Err(e) => estimators.iter().map(|_| Err(e.clone())).collect(),
        }
    });
    let empirical = estimators
        .iter()
        .enumerate()
        .map(|(j, &e)| (e, points.iter().map(|row| row[j].clone()).collect()))
        .collect();
    Ok(ScenarioRun { outcomes, empirical })
}

fn check_failures(name: &str, failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures {
            method: name.to_string(),
            failed,
            total,
        });
    }
    Ok(())
}

pub fn aggregate(s: &Scenario, run: &ScenarioRun) -> Result<Vec<MetricRow>> {
    let truth = [s.dgp.beta0, s.dgp.beta1];
    let mut empirical_sd = Vec::new();
    for (e, points) in &run.empirical {
        let ok: Vec<[f64; 2]> = points.iter().filter_map(|p| p.as_ref().ok().copied()).collect();
        check_failures(&format!("{} (empirical stream)", e.name()), points.len() - ok.len(), points.len())?;
        if ok.len() < 2 {
            return Err(Error::TooManyFailures {
                method: e.name().to_string(),
                failed: points.len() - ok.len(),
                total: points.len(),
            });
        }
        let sd = [0, 1].map(|c| sample_sd(&ok.iter().map(|b| b[c]).collect::<Vec<_>>()));
        empirical_sd.push((*e, sd));
    }

    let mut rows = Vec::with_capacity(s.methods.len() * 2);
    for (m_idx, &method) in s.methods.iter().enumerate() {
        let ok: Vec<MethodOutcome> = run
            .outcomes
            .iter()
            .filter_map(|r| r[m_idx].as_ref().ok().copied())
            .collect();
        let failures = run.outcomes.len() - ok.len();
        check_failures(method.name(), failures, run.outcomes.len())?;
        let sd = empirical_sd
            .iter()
            .find(|(e, _)| *e == method.estimator())
            .map(|(_, sd)| *sd)
            .expect("every selected estimator has an empirical stream");
        for c in 0..2 {
            let est: Vec<f64> = ok.iter().map(|o| o.beta[c]).collect();
            let se: Vec<f64> = ok.iter().map(|o| o.se[c]).collect();
            let m = compute_metrics(&est, &se, truth[c], sd[c])?;
            rows.push(MetricRow {
                scenario: s.id(),
                n: s.dgp.n,
                r2: s.dgp.r2_target,
                sigma2_y: s.dgp.sigma2_y,
                beta1_true: s.dgp.beta1,
                method,
                parameter: if c == 0 { "beta0" } else { "beta1" }.to_string(),
                truth: truth[c],
                bias: m.bias,
                rmse: m.rmse,
                mean_se: m.mean_se,
                empirical_sd: sd[c],
                variability_ratio: m.variability_ratio,
                coverage: m.coverage,
                replicates: ok.len(),
                failures,
            });
        }
    }
    Ok(rows)
}

/// Cartesian grid of scenarios over `n`, `R2`, `sigma2_Y` and `beta_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub n: Vec<usize>,
    pub r2: Vec<f64>,
    pub sigma2_y: Vec<f64>,
    pub beta1: Vec<f64>,
    pub replicates: usize,
    pub empirical_replicates: usize,
    pub bootstrap_count: usize,
    pub strata_count: usize,
    pub methods: Vec<MethodId>,
    pub master_seed: u64,
}

impl ScenarioGrid {
    /// Scenarios in row-major order: `n` outermost, `beta_1` innermost. All
    /// scenarios share the master seed, so replicate `b` of every scenario
    /// starts from the same random stream.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &r2 in &self.r2 {
                for &s2y in &self.sigma2_y {
                    for &b1 in &self.beta1 {
                        out.push(Scenario {
                            dgp: DgpParams::table1(n, r2, s2y, b1),
                            replicates: self.replicates,
                            bootstrap_count: self.bootstrap_count,
                            strata_count: self.strata_count,
                            methods: self.methods.clone(),
                            master_seed: self.master_seed,
                            empirical_replicates: self.empirical_replicates,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn run(&self) -> Result<Vec<MetricRow>> {
        let mut rows = Vec::new();
        for s in self.scenarios() {
            rows.extend(run_scenario(&s)?);
        }
        Ok(rows)
    }
}
