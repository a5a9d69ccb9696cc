mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpsdrf::dataset::{self, ColumnSpec, MissingPolicy};
use gpsdrf::drf::{DrfMethod, DEFAULT_STRATA};
use gpsdrf::gps::DEFAULT_WEIGHT_THRESHOLD;
use gpsdrf::report::{self, EstimateOptions};
use gpsdrf::simulation::DEFAULT_BOOTSTRAP;
use gpsdrf::Error;

#[derive(Parser)]
#[command(name = "gpsdrf", version, about = "Dose-response estimation with generalized propensity scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the dose-response line on a CSV file with every selected method.
    Estimate(EstimateArgs),
    /// Run a simulation grid and write one metric row per scenario, method and coefficient.
    Simulate(SimulateArgs),
    /// Pivot a metric file into per-scenario tables.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    Naive,
    Weighted,
    Stratified,
}

impl From<Estimator> for DrfMethod {
    fn from(e: Estimator) -> Self {
        match e {
            Estimator::Naive => DrfMethod::Naive,
            Estimator::Weighted => DrfMethod::Weighted,
            Estimator::Stratified => DrfMethod::Stratified,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    outcome: String,
    #[arg(long)]
    exposure: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',', required = true)]
    covariates: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "naive,weighted,stratified")]
    methods: Vec<Estimator>,
    #[arg(long, default_value_t = DEFAULT_STRATA)]
    strata: usize,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    nboot: usize,
    /// Seed of the bootstrap streams; required unless only `naive` is selected.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Drop rows with a missing value instead of failing.
    #[arg(long)]
    drop_incomplete: bool,
    /// Cap the weights at this upper percentile (0-100).
    #[arg(long)]
    truncate_percentile: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_WEIGHT_THRESHOLD)]
    weight_threshold: f64,
    #[arg(long)]
    threads: Option<usize>,
    /// Do not print the text table.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML grid file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    empirical_replicates: Option<usize>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    strata: Option<usize>,
    /// Use the published replicate counts instead of the desk-scale defaults.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Md,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long, value_enum, default_value = "md")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failed command: exit code 2 for bad input, 1 for computation errors.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn input(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind,
            message: message.into(),
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::MissingColumn(_) => "MissingColumn",
        Error::ParseError { .. } => "ParseError",
        Error::TooFewRows { .. } => "TooFewRows",
        Error::NonFinite { .. } => "NonFinite",
        Error::DimensionMismatch(_) => "DimensionMismatch",
        Error::EmptyStratum(_) => "EmptyStratum",
        Error::SingularMatrix { .. } => "SingularMatrix",
        Error::NonPositiveVariance(_) => "NonPositiveVariance",
        Error::ZeroExposureVariance(_) => "ZeroExposureVariance",
        Error::DegenerateFit(_) => "DegenerateFit",
        Error::EmptyInput => "EmptyInput",
        Error::BootstrapDegenerate { .. } => "BootstrapDegenerate",
        Error::DegenerateEmpiricalSd => "DegenerateEmpiricalSd",
        Error::TooManyFailures { .. } => "TooManyFailures",
        Error::InvalidArgument(_) => "InvalidArgument",
        Error::Io(_) => "Io",
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let input = matches!(
            e,
            Error::MissingColumn(_)
                | Error::ParseError { .. }
                | Error::TooFewRows { .. }
                | Error::NonFinite { .. }
                | Error::DimensionMismatch(_)
                | Error::EmptyInput
                | Error::InvalidArgument(_)
                | Error::Io(_)
        );
        Self {
            code: if input { 2 } else { 1 },
            kind: error_kind(&e),
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::input("Io", format!("{}: {e}", path.display()))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Failure::input("InvalidArgument", "--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::input("InvalidArgument", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::input("Io", e.to_string())),
    }
}

fn estimate(a: EstimateArgs) -> Result<(), Failure> {
    let estimators: Vec<DrfMethod> = a.methods.iter().map(|&m| m.into()).collect();
    let stochastic = estimators.iter().any(|m| *m != DrfMethod::Naive);
    let seed = match (a.seed, stochastic) {
        (Some(s), _) => s,
        (None, false) => 0,
        (None, true) => {
            return Err(Failure::input("MissingSeed", "--seed is required for the weighted and stratified estimators"))
        }
    };
    if let Some(p) = a.truncate_percentile {
        if !(p > 0.0 && p <= 100.0) {
            return Err(Failure::input("InvalidArgument", "--truncate-percentile must be in (0, 100]"));
        }
    }
    if !a.input.is_file() {
        return Err(Failure::input("Io", format!("{}: no such file", a.input.display())));
    }
    if let Some(parent) = a.out.as_deref().and_then(Path::parent) {
        if !parent.as_os_str().is_empty() && !parent.is_dir() {
            return Err(Failure::input("Io", format!("{}: directory does not exist", parent.display())));
        }
    }
    let covariates: Vec<&str> = a.covariates.iter().map(String::as_str).collect();
    let spec = ColumnSpec::new(&a.outcome, &a.exposure, &covariates);
    let policy = if a.drop_incomplete {
        MissingPolicy::DropIncomplete
    } else {
        MissingPolicy::Error
    };
    let d = dataset::load_csv_with(&a.input, &spec, policy)?;
    let opts = EstimateOptions {
        estimators,
        strata: a.strata,
        n_boot: a.nboot,
        seed,
        weight_threshold: a.weight_threshold,
        truncate_percentile: a.truncate_percentile,
    };
    let rep = with_threads(a.threads, || report::estimate(&d, &opts))??;
    if let Some(out) = &a.out {
        fs::write(out, report::to_json(&rep)?).map_err(|e| io_failure(out, e))?;
    }
    if !a.quiet {
        write_output(None, &report::render_estimate_text(&rep))?;
    }
    if rep.has_errors() {
        return Err(Failure {
            code: 1,
            kind: "EstimatorFailed",
            message: "one or more estimators failed; see the report".into(),
        });
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.config).map_err(|e| io_failure(&a.config, e))?;
    let overrides = config::Overrides {
        seed: a.seed,
        replicates: a.replicates,
        empirical_replicates: a.empirical_replicates,
        bootstrap: a.bootstrap,
        strata: a.strata,
        full_scale: a.full_scale,
    };
    let grid = config::parse(&text)
        .and_then(|f| f.into_grid(&overrides))
        .map_err(|e| Failure::input("Config", e.to_string()))?;
    let file = File::create(&a.out).map_err(|e| io_failure(&a.out, e))?;
    let rows = with_threads(a.threads, || grid.run())??;
    let mut w = BufWriter::new(file);
    report::write_metrics_csv(&rows, &mut w)?;
    w.flush().map_err(|e| io_failure(&a.out, e))?;
    eprintln!(
        "wrote {} metric rows for {} scenario(s) to {}",
        rows.len(),
        grid.scenarios().len(),
        a.out.display()
    );
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<(), Failure> {
    let file = File::open(&a.metrics).map_err(|e| io_failure(&a.metrics, e))?;
    let rows = report::read_metrics_csv(file).map_err(|e| match e {
        Error::InvalidArgument(m) => Failure::input("SchemaMismatch", m),
        other => other.into(),
    })?;
    let pivot = report::pivot(&rows);
    let text = match a.format {
        Format::Csv => report::render_pivot_csv(&pivot)?,
        Format::Json => report::to_json(&pivot)?,
        Format::Md => report::render_pivot_markdown(&pivot),
    };
    write_output(a.out.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind, f.message);
            ExitCode::from(f.code)
        }
    }
}
