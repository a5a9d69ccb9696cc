use gpsdrf::drf::DrfMethod;
use gpsdrf::gps;
use gpsdrf::seed::{rng_from_seed, sub_seed};
use gpsdrf::simulation::{
    self, DgpParams, MethodId, MethodOutcome, ReplicateContext, ReplicateEvaluator, Scenario, ScenarioGrid,
    StandardEvaluator, TABLE1_ALPHA, TABLE1_SIGMA,
};
use gpsdrf::{Dataset, Error, Result};
use proptest::prelude::*;

fn small(methods: Vec<MethodId>, r2: f64, beta1: f64) -> Scenario {
    let mut s = Scenario::desk(200, r2, 0.5, beta1, 17);
    s.replicates = 20;
    s.empirical_replicates = 40;
    s.bootstrap_count = 20;
    s.strata_count = 5;
    s.methods = methods;
    s
}

#[test]
fn reference_design_arithmetic() {
    let p = DgpParams::table1(100, 0.5, 0.5, 1.0);
    assert_eq!(TABLE1_ALPHA.iter().map(|a| a * a).sum::<f64>(), 40.5);
    assert!((p.noise_variance() - 40.5).abs() < 1e-12);
    assert!((DgpParams::table1(100, 0.8, 0.5, 1.0).noise_variance() - 10.125).abs() < 1e-12);
    let s2: f64 = TABLE1_SIGMA.iter().map(|s| s * s).sum();
    assert!((s2 - 0.6025).abs() < 1e-12);
    assert!(p.validate().is_ok());
    let c = p.covariance();
    assert_eq!(c[(10, 10)], 1.0);
    assert_eq!(c[(9, 10)], 0.2);
    assert_eq!(c[(10, 2)], -0.4);
}

#[test]
fn invalid_parameters_are_rejected() {
    let mut p = DgpParams::table1(100, 0.5, 0.5, 1.0);
    p.sigma_u = vec![0.5; 10];
    assert!(matches!(p.validate(), Err(Error::SingularMatrix { .. })));
    assert!(DgpParams::table1(100, 1.0, 0.5, 1.0).validate().is_err());
    assert!(DgpParams::table1(100, 0.5, 0.0, 1.0).validate().is_err());
    assert!(matches!(DgpParams::table1(12, 0.5, 0.5, 1.0).validate(), Err(Error::TooFewRows { .. })));
    let mut s = small(vec![MethodId::NaiveModelBased], 0.5, 1.0);
    s.replicates = 1;
    assert!(simulation::run_scenario(&s).is_err());
}

#[test]
fn generated_dataset_follows_the_outcome_equation() {
    let p = DgpParams::table1(500, 0.6, 0.25, 2.0);
    let draw = simulation::generate_with_latent(&p, &mut rng_from_seed(4)).unwrap();
    let d = &draw.data;
    assert_eq!((d.n(), d.p()), (500, 10));
    assert_eq!(d.covariate_names()[9], "Z10");
    for i in 0..d.n() {
        let u = draw.u[i];
        assert!((0.0..=1.0).contains(&u));
        assert!((d.y()[i] - (2.0 * d.t()[i] + 0.25 * u)).abs() < 1e-12);
    }
}

#[test]
fn naive_bias_follows_the_confounding_direction() {
    // cov(T, U) has the sign of sum(alpha_k sigma_k) = -0.85.
    let dot: f64 = TABLE1_ALPHA.iter().zip(&TABLE1_SIGMA).map(|(a, s)| a * s).sum();
    assert!((dot + 0.85).abs() < 1e-12);
    let p = DgpParams::table1(100_000, 0.5, 0.5, 0.0);
    let d = simulation::generate_dataset(&p, &mut rng_from_seed(1)).unwrap();
    let slope = gpsdrf::drf::fit_naive(&d).unwrap().beta[1];
    assert!(slope < 0.0, "naive slope {slope}");
}

#[test]
fn propensity_r2_tracks_the_target() {
    for target in [0.2, 0.6] {
        let p = DgpParams::table1(2000, target, 0.5, 1.0);
        let r2: Vec<f64> = (0..200u64)
            .map(|b| {
                let d = simulation::generate_dataset(&p, &mut rng_from_seed(sub_seed(5, 0, b))).unwrap();
                gps::fit_propensity(&d).unwrap().r2
            })
            .collect();
        let mean = r2.iter().sum::<f64>() / r2.len() as f64;
        assert!((mean - target).abs() <= 0.03, "target {target}: mean {mean}");
    }
}

#[test]
fn weights_average_near_one_at_low_confounding() {
    for r2 in [0.2, 0.4] {
        let p = DgpParams::table1(1000, r2, 0.5, 1.0);
        let d = simulation::generate_dataset(&p, &mut rng_from_seed(21)).unwrap();
        let f = gps::fit_propensity(&d).unwrap();
        let w = gps::weights(&d, &f).unwrap();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!((0.8..=1.2).contains(&mean), "R2 {r2}: mean weight {mean}");
    }
}

#[test]
fn metric_formula_examples() {
    let m = simulation::metric_formulas(&[2.0, 2.0, 2.0], &[1.0; 3], 2.0, 1.0).unwrap();
    assert_eq!((m.bias, m.rmse, m.variability_ratio, m.coverage), (0.0, 0.0, Some(1.0), 1.0));

    let m = simulation::metric_formulas(&[0.0, 2.0], &[1.0, 1.0], 1.0, 0.5).unwrap();
    assert_eq!((m.bias, m.rmse, m.coverage), (0.0, 1.0, 1.0));

    // Hand case: estimates (1.1, 0.8, 1.3) around truth 1 with ses (0.1, 0.1, 0.2).
    // Errors 0.1, -0.2, 0.3: bias 0.2/3, rmse sqrt(0.14/3); intervals cover the
    // first and third only (|-0.2| > 0.196).
    let m = simulation::metric_formulas(&[1.1, 0.8, 1.3], &[0.1, 0.1, 0.2], 1.0, 0.2).unwrap();
    assert!((m.bias - 0.2 / 3.0).abs() < 1e-12);
    assert!((m.rmse - (0.14f64 / 3.0).sqrt()).abs() < 1e-12);
    assert!((m.mean_se - 0.4 / 3.0).abs() < 1e-12);
    assert!((m.variability_ratio.unwrap() - 0.4 / 0.6).abs() < 1e-12);
    assert!((m.coverage - 2.0 / 3.0).abs() < 1e-12);

    assert_eq!(simulation::metric_formulas(&[1.0, 1.0], &[1.0, 1.0], 1.0, 0.0), Err(Error::DegenerateEmpiricalSd));
    assert!(simulation::metric_formulas(&[1.0], &[1.0], 1.0, 1.0).is_err());
    assert!(simulation::metric_formulas(&[1.0, 2.0], &[1.0], 1.0, 1.0).is_err());
}

/// Real point estimates with infinitely wide intervals.
struct InfiniteSe;

impl ReplicateEvaluator for InfiniteSe {
    fn evaluate(&self, d: &Dataset, methods: &[MethodId], ctx: &ReplicateContext) -> Vec<Result<MethodOutcome>> {
        StandardEvaluator
            .evaluate(d, methods, ctx)
            .into_iter()
            .map(|r| r.map(|o| MethodOutcome { beta: o.beta, se: [f64::INFINITY; 2] }))
            .collect()
    }

    fn point_estimate(&self, d: &Dataset, e: DrfMethod, l: usize) -> Result<[f64; 2]> {
        StandardEvaluator.point_estimate(d, e, l)
    }
}

/// Returns the true coefficients with unit standard errors.
struct Oracle([f64; 2]);

impl ReplicateEvaluator for Oracle {
    fn evaluate(&self, _: &Dataset, methods: &[MethodId], _: &ReplicateContext) -> Vec<Result<MethodOutcome>> {
        methods.iter().map(|_| Ok(MethodOutcome { beta: self.0, se: [1.0; 2] })).collect()
    }

    fn point_estimate(&self, _: &Dataset, _: DrfMethod, _: usize) -> Result<[f64; 2]> {
        Ok(self.0)
    }
}

/// Fails every third replicate of the naive estimator.
struct Flaky;

impl ReplicateEvaluator for Flaky {
    fn evaluate(&self, d: &Dataset, methods: &[MethodId], ctx: &ReplicateContext) -> Vec<Result<MethodOutcome>> {
        if ctx.seed % 3 == 0 {
            return methods.iter().map(|_| Err(Error::SingularMatrix { rcond: 0.0 })).collect();
        }
        StandardEvaluator.evaluate(d, methods, ctx)
    }

    fn point_estimate(&self, d: &Dataset, e: DrfMethod, l: usize) -> Result<[f64; 2]> {
        StandardEvaluator.point_estimate(d, e, l)
    }
}

#[test]
fn infinite_intervals_cover_everything() {
    let s = small(MethodId::ALL.to_vec(), 0.5, 3.0);
    let rows = simulation::run_scenario_with(&s, &InfiniteSe).unwrap();
    assert_eq!(rows.len(), 14);
    assert!(rows.iter().all(|r| r.coverage == 1.0 && r.mean_se.is_infinite()));
}

#[test]
fn exact_estimator_gives_degenerate_ratio() {
    let s = small(MethodId::ALL.to_vec(), 0.5, 3.0);
    let rows = simulation::run_scenario_with(&s, &Oracle([0.0, 3.0])).unwrap();
    for r in rows {
        assert_eq!((r.bias, r.rmse, r.empirical_sd, r.coverage), (0.0, 0.0, 0.0, 1.0));
        assert_eq!(r.variability_ratio, None);
    }
}

#[test]
fn failure_threshold() {
    let s = small(vec![MethodId::NaiveModelBased], 0.5, 1.0);
    let failing = (0..s.replicates as u64)
        .filter(|b| sub_seed(s.master_seed, gpsdrf::seed::TAG_REPLICATE, *b) % 3 == 0)
        .count();
    let out = simulation::run_scenario_with(&s, &Flaky);
    if failing * 10 > s.replicates {
        assert!(matches!(out, Err(Error::TooManyFailures { failed, total: 20, .. }) if failed == failing));
    } else {
        let rows = out.unwrap();
        assert_eq!(rows[0].failures, failing);
        assert_eq!(rows[0].replicates, 20 - failing);
    }
}

#[test]
fn metric_rows_satisfy_identities() {
    let s = small(MethodId::ALL.to_vec(), 0.6, 1.0);
    let run = simulation::simulate_replicates(&s, &StandardEvaluator).unwrap();
    let rows = simulation::aggregate(&s, &run).unwrap();
    for (k, r) in rows.iter().enumerate() {
        let m = k / 2;
        let c = k % 2;
        assert_eq!(r.method, s.methods[m]);
        let est: Vec<f64> = run.outcomes.iter().map(|o| o[m].as_ref().unwrap().beta[c]).collect();
        let b = est.len() as f64;
        let var = simulation::sample_sd(&est).powi(2);
        assert!((r.rmse * r.rmse - (r.bias * r.bias + var * (b - 1.0) / b)).abs() <= 1e-10 * r.rmse.powi(2).max(1e-12));
        assert!(r.rmse >= r.bias.abs());
        assert!((0.0..=1.0).contains(&r.coverage));
        assert_eq!(r.variability_ratio, Some(r.mean_se / r.empirical_sd));
        assert_eq!(r.parameter, if c == 0 { "beta0" } else { "beta1" });
        assert_eq!(r.failures, 0);
    }
}

#[test]
fn scenarios_are_deterministic_across_thread_counts() {
    let s = small(MethodId::ALL.to_vec(), 0.8, 1.0);
    let a = simulation::run_scenario(&s).unwrap();
    let b = simulation::run_scenario(&s).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let c = pool.install(|| simulation::run_scenario(&s).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);
    let mut other = s.clone();
    other.master_seed += 1;
    assert_ne!(a, simulation::run_scenario(&other).unwrap());
}

#[test]
fn grid_order_and_ids() {
    let g = ScenarioGrid {
        n: vec![100, 200],
        r2: vec![0.2, 0.8],
        sigma2_y: vec![0.5],
        beta1: vec![0.0, 1.0],
        replicates: 5,
        empirical_replicates: 5,
        bootstrap_count: 5,
        strata_count: 5,
        methods: vec![MethodId::NaiveModelBased],
        master_seed: 1,
    };
    let s = g.scenarios();
    assert_eq!(s.len(), 8);
    assert_eq!((s[0].dgp.n, s[0].dgp.r2_target, s[0].dgp.beta1), (100, 0.2, 0.0));
    assert_eq!((s[1].dgp.n, s[1].dgp.r2_target, s[1].dgp.beta1), (100, 0.2, 1.0));
    assert_eq!((s[2].dgp.n, s[2].dgp.r2_target), (100, 0.8));
    assert_eq!(s[4].dgp.n, 200);
    assert_eq!(s[0].id(), "n100_r2-0.2_s2y-0.5_b1-0_L5");
    let ids: std::collections::HashSet<_> = s.iter().map(|x| x.id()).collect();
    assert_eq!(ids.len(), 8);
    assert_eq!(g.run().unwrap().len(), 16);
}

#[test]
fn method_names_round_trip() {
    for m in MethodId::ALL {
        assert_eq!(MethodId::parse(m.name()).unwrap(), m);
    }
    assert!(MethodId::parse("weighted").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_invariants(
        est in prop::collection::vec(-5.0f64..5.0, 2..40),
        se in 0.01f64..3.0,
        truth in -2.0f64..2.0,
        sd in 0.01f64..3.0,
    ) {
        let ses = vec![se; est.len()];
        let m = simulation::metric_formulas(&est, &ses, truth, sd).unwrap();
        let b = est.len() as f64;
        let var = simulation::sample_sd(&est).powi(2);
        prop_assert!((m.rmse.powi(2) - (m.bias.powi(2) + var * (b - 1.0) / b)).abs() <= 1e-10 * m.rmse.powi(2).max(1.0));
        prop_assert!(m.rmse + 1e-12 >= m.bias.abs());
        prop_assert!((0.0..=1.0).contains(&m.coverage));
        prop_assert!((m.variability_ratio.unwrap() - se / sd).abs() <= 1e-12 * (se / sd));
    }
}
