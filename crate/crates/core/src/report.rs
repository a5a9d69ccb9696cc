//! Result tables: the per-method estimate report of a real-data analysis,
//! metric files of simulation runs and their pivoted summaries.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use serde::Serialize;

use crate::dataset::Dataset;
use crate::drf::{self, DrfMethod, DEFAULT_STRATA};
use crate::error::{Error, Result};
use crate::gps::{self, WeightDiagnostics, DEFAULT_WEIGHT_THRESHOLD};
use crate::seed::{self, sub_seed};
use crate::simulation::{MethodId, MetricRow, DEFAULT_BOOTSTRAP};
use crate::variance::{self, BootstrapMeta, BootstrapTarget, VarianceEstimate, VarianceMethod};

/// Version of the JSON layouts written by this module.
pub const SCHEMA_VERSION: u32 = 1;

/// JSON formatter writing every float with 17 significant digits.
struct SeventeenDigits<'a>(serde_json::ser::PrettyFormatter<'a>);

impl serde_json::ser::Formatter for SeventeenDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with 17 significant digits per float; non-finite floats
/// become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = SeventeenDigits(serde_json::ser::PrettyFormatter::with_indent(b"  "));
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser).map_err(|e| Error::Io(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub estimators: Vec<DrfMethod>,
    pub strata: usize,
    pub n_boot: usize,
    pub seed: u64,
    pub weight_threshold: f64,
    /// Cap weights at this upper percentile. Off by default.
    pub truncate_percentile: Option<f64>,
}

impl EstimateOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            estimators: vec![DrfMethod::Naive, DrfMethod::Weighted, DrfMethod::Stratified],
            strata: DEFAULT_STRATA,
            n_boot: DEFAULT_BOOTSTRAP,
            seed,
            weight_threshold: DEFAULT_WEIGHT_THRESHOLD,
            truncate_percentile: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropensitySummary {
    pub r2: f64,
    pub alpha: Vec<f64>,
    pub sigma2: f64,
    pub mu_t: f64,
    pub sigma2_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StandardError {
    pub variance: VarianceMethod,
    pub se: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapMeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StandardError {
    fn from_result(variance: VarianceMethod, r: Result<VarianceEstimate>) -> Self {
        match r {
            Ok(v) => Self {
                variance,
                se: Some(v.se()),
                bootstrap: v.bootstrap,
                error: None,
            },
            Err(e) => Self {
                variance,
                se: None,
                bootstrap: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub estimator: DrfMethod,
    pub beta: Option<[f64; 2]>,
    pub standard_errors: Vec<StandardError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Every estimator with every applicable standard error, plus propensity
/// and weight diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub n: usize,
    pub covariates: Vec<String>,
    pub strata: usize,
    pub n_boot: usize,
    pub seed: u64,
    pub truncate_percentile: Option<f64>,
    pub propensity: Option<PropensitySummary>,
    pub weights: Option<WeightDiagnostics>,
    pub estimators: Vec<EstimatorReport>,
}

impl EstimateReport {
    /// Whether any estimator or standard error failed.
    pub fn has_errors(&self) -> bool {
        self.estimators
            .iter()
            .any(|e| e.error.is_some() || e.standard_errors.iter().any(|s| s.error.is_some()))
    }
}

fn failed(estimator: DrfMethod, e: Error) -> EstimatorReport {
    EstimatorReport {
        estimator,
        beta: None,
        standard_errors: Vec::new(),
        error: Some(e.to_string()),
    }
}

/// Runs the selected estimators on `d`.
///
/// A failure inside one estimator is recorded in its entry; only a failure
/// of the shared propensity model aborts with an error. Bootstrap streams
/// derive from `opts.seed`.
pub fn estimate(d: &Dataset, opts: &EstimateOptions) -> Result<EstimateReport> {
    let needs_ps = opts.estimators.iter().any(|e| *e != DrfMethod::Naive);
    let propensity = if needs_ps { Some(gps::fit_propensity(d)?) } else { None };
    let weight_set = match &propensity {
        Some(f) if opts.estimators.contains(&DrfMethod::Weighted) => Some(gps::stabilized_weights(d, f)?),
        _ => None,
    };
    let mut out = Vec::new();
    for &est in &opts.estimators {
        let entry = match est {
            DrfMethod::Naive => match drf::fit_naive(d) {
                Ok(fit) => EstimatorReport {
                    estimator: est,
                    beta: Some(fit.beta),
                    standard_errors: vec![StandardError::from_result(
                        VarianceMethod::ModelBased,
                        variance::var_model_based(d, &fit),
                    )],
                    error: None,
                },
                Err(e) => failed(est, e),
            },
            DrfMethod::Weighted => {
                let f = propensity.as_ref().expect("fitted above");
                let ws = weight_set.as_ref().expect("computed above");
                match opts.truncate_percentile {
                    None => weighted_entry(d, f, ws, opts),
                    Some(pct) => truncated_entry(d, ws, pct),
                }
            }
            DrfMethod::Stratified => {
                let f = propensity.as_ref().expect("fitted above");
                match drf::fit_stratified(d, f, opts.strata) {
                    Ok(fit) => {
                        let target = BootstrapTarget::Stratified { l_count: opts.strata };
                        let boot_seed = sub_seed(opts.seed, seed::TAG_BOOT_STRATIFIED, 0);
                        EstimatorReport {
                            estimator: est,
                            beta: Some(fit.beta),
                            standard_errors: vec![
                                StandardError::from_result(
                                    VarianceMethod::PooledModelBased,
                                    variance::pooled_model_based(d, &fit),
                                ),
                                StandardError::from_result(
                                    VarianceMethod::PooledLinearized,
                                    variance::pooled_linearized(d, &fit).map(|r| r.1),
                                ),
                                StandardError::from_result(
                                    VarianceMethod::Bootstrap,
                                    variance::var_bootstrap(d, target, opts.n_boot, boot_seed),
                                ),
                            ],
                            error: None,
                        }
                    }
                    Err(e) => failed(est, e),
                }
            }
        };
        out.push(entry);
    }
    Ok(EstimateReport {
        schema_version: SCHEMA_VERSION,
        n: d.n(),
        covariates: d.covariate_names().to_vec(),
        strata: opts.strata,
        n_boot: opts.n_boot,
        seed: opts.seed,
        truncate_percentile: opts.truncate_percentile,
        propensity: propensity.as_ref().map(|f| PropensitySummary {
            r2: f.r2,
            alpha: f.alpha.clone(),
            sigma2: f.sigma2,
            mu_t: f.mu_t,
            sigma2_t: f.sigma2_t,
        }),
        weights: weight_set
            .as_ref()
            .map(|ws| gps::weight_diagnostics(&ws.w, opts.weight_threshold)),
        estimators: out,
    })
}

fn weighted_entry(
    d: &Dataset,
    f: &gps::PropensityFit,
    ws: &gps::WeightSet,
    opts: &EstimateOptions,
) -> EstimatorReport {
    match drf::fit_weighted(d, ws) {
        Ok(fit) => {
            let boot_seed = sub_seed(opts.seed, seed::TAG_BOOT_WEIGHTED, 0);
            EstimatorReport {
                estimator: DrfMethod::Weighted,
                beta: Some(fit.beta),
                standard_errors: vec![
                    StandardError::from_result(
                        VarianceMethod::Sandwich,
                        variance::var_sandwich_weighted(d, ws, &fit),
                    ),
                    StandardError::from_result(
                        VarianceMethod::Linearized,
                        variance::linearized_weighted(d, f, ws, &fit).map(|r| r.1),
                    ),
                    StandardError::from_result(
                        VarianceMethod::Bootstrap,
                        variance::var_bootstrap(d, BootstrapTarget::Weighted, opts.n_boot, boot_seed),
                    ),
                ],
                error: None,
            }
        }
        Err(e) => failed(DrfMethod::Weighted, e),
    }
}

/// Truncated weights are no longer a smooth function of the propensity
/// parameters, so only the fixed-weight sandwich is reported.
fn truncated_entry(d: &Dataset, ws: &gps::WeightSet, pct: f64) -> EstimatorReport {
    let run = || -> Result<EstimatorReport> {
        let w = gps::truncate_weights(&ws.w, pct)?;
        let fit = drf::fit_weighted_with(d, &w)?;
        let capped = gps::WeightSet {
            w,
            grad_w: ws.grad_w.clone(),
        };
        Ok(EstimatorReport {
            estimator: DrfMethod::Weighted,
            beta: Some(fit.beta),
            standard_errors: vec![StandardError::from_result(
                VarianceMethod::Sandwich,
                variance::var_sandwich_weighted(d, &capped, &fit),
            )],
            error: None,
        })
    };
    run().unwrap_or_else(|e| failed(DrfMethod::Weighted, e))
}

fn variance_label(v: VarianceMethod) -> &'static str {
    match v {
        VarianceMethod::ModelBased => "Model-based standard error",
        VarianceMethod::Sandwich => "Sandwich standard error",
        VarianceMethod::Linearized => "Linearized standard error",
        VarianceMethod::PooledModelBased => "Pooled model-based standard error",
        VarianceMethod::PooledLinearized => "Pooled linearized standard error",
        VarianceMethod::Bootstrap => "Bootstrap standard error",
    }
}

/// Human-readable table: one line per estimator with `beta_0` and `beta_1`,
/// followed by its standard errors in parentheses.
pub fn render_estimate_text(r: &EstimateReport) -> String {
    let mut s = String::new();
    let name = |e: DrfMethod| match e {
        DrfMethod::Naive => "Naive",
        DrfMethod::Weighted => "Weighted",
        DrfMethod::Stratified => "Stratified",
    };
    s.push_str(&format!("n = {}, covariates: {}\n", r.n, r.covariates.join(", ")));
    if let Some(p) = &r.propensity {
        s.push_str(&format!("Propensity model R2 = {:.4}\n", p.r2));
    }
    if let Some(pct) = r.truncate_percentile {
        s.push_str(&format!("Weights truncated at percentile {pct}; weighted estimator reports the sandwich error only\n"));
    }
    if let Some(w) = &r.weights {
        s.push_str(&format!(
            "Weights: min {:.4}, max {:.4}, mean {:.4}, cv {:.4}, {} above {}\n",
            w.min, w.max, w.mean, w.cv, w.count_above, w.threshold
        ));
    }
    s.push('\n');
    s.push_str(&format!("{:<42}{:>16}{:>16}\n", "Method", "beta0", "beta1"));
    let num = |v: f64| format!("{v:.4}");
    for e in &r.estimators {
        match (&e.beta, &e.error) {
            (Some(b), _) => s.push_str(&format!("{:<42}{:>16}{:>16}\n", name(e.estimator), num(b[0]), num(b[1]))),
            (None, err) => s.push_str(&format!(
                "{:<42}failed: {}\n",
                name(e.estimator),
                err.as_deref().unwrap_or("unknown error")
            )),
        }
        for se in &e.standard_errors {
            let label = format!("  {}", variance_label(se.variance));
            match (&se.se, &se.error) {
                (Some(v), _) => s.push_str(&format!(
                    "{:<42}{:>16}{:>16}\n",
                    label,
                    format!("({})", num(v[0])),
                    format!("({})", num(v[1]))
                )),
                (None, err) => s.push_str(&format!("{:<42}{}\n", label, err.as_deref().unwrap_or("unavailable"))),
            }
        }
    }
    s
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(METRIC_HEADER).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

const METRIC_HEADER: [&str; 16] = [
    "scenario",
    "n",
    "r2",
    "sigma2_y",
    "beta1_true",
    "method",
    "parameter",
    "truth",
    "bias",
    "rmse",
    "mean_se",
    "empirical_sd",
    "variability_ratio",
    "coverage",
    "replicates",
    "failures",
];

/// Reads a metric file; an empty file (or a header alone) yields no rows.
pub fn read_metrics_csv<R: Read>(reader: R) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    if headers.iter().ne(METRIC_HEADER.iter().copied()) {
        return Err(Error::InvalidArgument(format!(
            "metric file header mismatch: expected {}",
            METRIC_HEADER.join(",")
        )));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::InvalidArgument(format!("bad metric row: {e}"))))
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Coordinates of a pivot row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PivotKey {
    pub n: usize,
    pub r2: f64,
    pub sigma2_y: f64,
    pub beta1: f64,
    pub parameter: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PivotRow {
    pub key: PivotKey,
    pub cells: Vec<Option<f64>>,
}

/// One metric laid out as scenario rows by method columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PivotTable {
    pub metric: String,
    pub methods: Vec<MethodId>,
    pub rows: Vec<PivotRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub tables: Vec<PivotTable>,
}

pub const PIVOT_METRICS: [&str; 6] = ["bias", "rmse", "mean_se", "empirical_sd", "variability_ratio", "coverage"];

fn metric_value(r: &MetricRow, metric: &str) -> Option<f64> {
    match metric {
        "bias" => Some(r.bias),
        "rmse" => Some(r.rmse),
        "mean_se" => Some(r.mean_se),
        "empirical_sd" => Some(r.empirical_sd),
        "variability_ratio" => r.variability_ratio,
        "coverage" => Some(r.coverage),
        _ => None,
    }
}

/// Pivots metric rows into one table per metric, rows ordered by
/// `(n, R2, sigma2_Y, beta_1, parameter)` and columns by method.
pub fn pivot(rows: &[MetricRow]) -> MetricsReport {
    let mut methods: Vec<MethodId> = rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    // Keys compare on bit patterns so that ordering is total and stable.
    type Key = (usize, u64, u64, u64, String);
    let key_of = |r: &MetricRow| -> Key {
        (
            r.n,
            ordered_bits(r.r2),
            ordered_bits(r.sigma2_y),
            ordered_bits(r.beta1_true),
            r.parameter.clone(),
        )
    };
    let mut groups: BTreeMap<Key, Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(key_of(r)).or_default().push(r);
    }
    let tables = if rows.is_empty() {
        Vec::new()
    } else {
        PIVOT_METRICS
            .iter()
            .map(|&metric| PivotTable {
                metric: metric.to_string(),
                methods: methods.clone(),
                rows: groups
                    .values()
                    .map(|g| PivotRow {
                        key: PivotKey {
                            n: g[0].n,
                            r2: g[0].r2,
                            sigma2_y: g[0].sigma2_y,
                            beta1: g[0].beta1_true,
                            parameter: g[0].parameter.clone(),
                        },
                        cells: methods
                            .iter()
                            .map(|m| g.iter().find(|r| r.method == *m).and_then(|r| metric_value(r, metric)))
                            .collect(),
                    })
                    .collect(),
            })
            .collect()
    };
    MetricsReport {
        schema_version: SCHEMA_VERSION,
        tables,
    }
}

/// Monotone map from `f64` to `u64` (total order, negatives first).
fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn render_pivot_csv(report: &MetricsReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = report.tables.first() {
        let mut header: Vec<String> = ["metric", "n", "r2", "sigma2_y", "beta1", "parameter"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(first.methods.iter().map(|m| m.name().to_string()));
        w.write_record(&header).map_err(csv_err)?;
    }
    for t in &report.tables {
        for r in &t.rows {
            let mut rec = vec![
                t.metric.clone(),
                r.key.n.to_string(),
                r.key.r2.to_string(),
                r.key.sigma2_y.to_string(),
                r.key.beta1.to_string(),
                r.key.parameter.clone(),
            ];
            rec.extend(r.cells.iter().map(|c| cell(*c)));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn render_pivot_markdown(report: &MetricsReport) -> String {
    let mut s = String::new();
    for t in &report.tables {
        s.push_str(&format!("## {}\n\n| n | R2 | sigma2_Y | beta1 | parameter |", t.metric));
        for m in &t.methods {
            s.push_str(&format!(" {} |", m.name()));
        }
        s.push_str("\n|---|---|---|---|---|");
        for _ in &t.methods {
            s.push_str("---|");
        }
        s.push('\n');
        for r in &t.rows {
            s.push_str(&format!(
                "| {} | {} | {} | {} | {} |",
                r.key.n, r.key.r2, r.key.sigma2_y, r.key.beta1, r.key.parameter
            ));
            for c in &r.cells {
                s.push_str(&format!(" {} |", c.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())));
            }
            s.push('\n');
        }
        s.push('\n');
    }
    s
}
