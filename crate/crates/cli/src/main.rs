//! `uqpe`: estimate UQPE curves from a CSV, run Monte Carlo studies on the
//! Gaussian designs, or print oracle values.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print
//! one JSON object `{"error": {"stage", "message", "hint"}}` on stderr.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};
use uqpe::estimator::{
    estimate_with_models, merge_taus, tau_range, Estimator, FittedModels, UqpeConfig, UqpeEstimate, SCHEMA_VERSION,
};
use uqpe::simulation::{run_mc_study, true_uqpe_curve, write_metrics_csv, Dgp, DgpSpec, McMetrics, Sparsity};
use uqpe::{ingest_csv, UqpeError};

#[derive(Parser, Debug)]
#[command(
    name = "uqpe",
    version,
    about = "Debiased UQPE estimation with uniform confidence bands"
)]
struct Cli {
    /// Worker threads (default: UQPE_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate UQPE(tau) with pointwise intervals and uniform bands.
    Estimate(EstimateArgs),
    /// Monte Carlo study on a simulated design.
    Simulate(SimulateArgs),
    /// Oracle UQPE values of a simulated design.
    TrueUqpe(TrueArgs),
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    outcome: String,
    #[arg(long)]
    treatment: String,
    /// Control columns (default: every other column).
    #[arg(long, value_delimiter = ',')]
    controls: Vec<String>,
    /// Reported quantile levels; merged with a 0.05-step grid over upsilon.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.4, 0.6, 0.8])]
    taus: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.2, 0.8])]
    upsilon: Vec<f64>,
    /// Number of threshold grid points over upsilon widened by 0.05.
    #[arg(long, default_value_t = 41)]
    grid: usize,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "debiased")]
    estimator: Estimator,
    #[arg(long, default_value = "uqpe-out")]
    out: PathBuf,
    /// Also write the fitted nuisance models to model.json.
    #[arg(long)]
    save_model: bool,
    /// Multiplier applied to values in bands.csv and the printed table.
    #[arg(long, default_value_t = 1.0)]
    report_scale: f64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_dgp)]
    dgp: Dgp,
    #[arg(long)]
    sparsity: Sparsity,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    p: usize,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// One estimator or a comma list run on shared datasets and multipliers.
    #[arg(long, value_delimiter = ',', default_value = "debiased")]
    estimator: Vec<Estimator>,
    #[arg(long, default_value_t = 10_000_000)]
    oracle_n: usize,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    /// Rows written to metrics.csv.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.4, 0.6, 0.8])]
    taus: Vec<f64>,
    #[arg(long, default_value = "uqpe-sim")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrueArgs {
    #[arg(long, value_parser = parse_dgp)]
    dgp: Dgp,
    #[arg(long)]
    sparsity: Sparsity,
    #[arg(long, default_value_t = 100)]
    p: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.4, 0.6, 0.8])]
    taus: Vec<f64>,
    #[arg(long, default_value_t = 10_000_000)]
    oracle_n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn parse_dgp(s: &str) -> Result<Dgp, String> {
    s.parse::<u8>()
        .ok()
        .and_then(Dgp::from_id)
        .ok_or_else(|| format!("unknown design `{s}` (1, 2 or 3)"))
}

#[derive(Serialize)]
struct ErrorBody {
    stage: String,
    message: String,
    hint: String,
}

struct Failure {
    code: u8,
    body: ErrorBody,
}

impl From<UqpeError> for Failure {
    fn from(e: UqpeError) -> Self {
        let stage = e.stage().map_or_else(
            || {
                match e.root() {
                    UqpeError::Io(_) | UqpeError::Csv(_) | UqpeError::Schema(_) | UqpeError::EmptyData { .. } => {
                        "ingest"
                    }
                    UqpeError::InvalidConfig(_) => "config",
                    UqpeError::StudyFailed { .. } => "simulation",
                    _ => "runtime",
                }
                .to_string()
            },
            |s| s.to_string(),
        );
        let code = if matches!(e.root(), UqpeError::InvalidConfig(_)) {
            2
        } else {
            1
        };
        Failure {
            code,
            body: ErrorBody {
                stage,
                message: e.to_string(),
                hint: hint(e.root()).to_string(),
            },
        }
    }
}

fn runtime(stage: &str, message: String, hint: &str) -> Failure {
    Failure {
        code: 1,
        body: ErrorBody {
            stage: stage.into(),
            message,
            hint: hint.into(),
        },
    }
}

fn hint(e: &UqpeError) -> &'static str {
    match e {
        UqpeError::Io(_) => "check that the path exists and is readable",
        UqpeError::Csv(_) => "the input must be a comma-separated file with a header row",
        UqpeError::Schema(_) => "check the column names passed to --outcome, --treatment and --controls",
        UqpeError::EmptyData { .. } => "every row has a missing or non-numeric value in the selected columns",
        UqpeError::DegenerateBasis { .. } => "drop constant columns from --controls",
        UqpeError::DegenerateOutcome { .. } | UqpeError::AllGridDegenerate => {
            "the outcome has too few distinct values; narrow --upsilon or check the outcome column"
        }
        UqpeError::Extrapolation { .. } => "widen the threshold grid or narrow --upsilon",
        UqpeError::DensityFloor { .. } | UqpeError::ZeroBandwidth => {
            "the outcome density is (near) zero at a requested quantile; choose different --taus"
        }
        UqpeError::DegenerateDraws | UqpeError::DegenerateWeights | UqpeError::RedrawsExhausted(_) => {
            "increase --bootstrap or the sample size"
        }
        UqpeError::BaselineInfeasible(_) => "the RIF-Logit baseline needs fewer regressors than observations",
        UqpeError::InvalidConfig(_) => "see `uqpe --help` for valid option values",
        UqpeError::StudyFailed { .. } => "inspect a single replication with `uqpe estimate` on simulated data",
        UqpeError::NonFinite(_) | UqpeError::Dimension { .. } => "please report this input as a bug",
        UqpeError::Stage { .. } => unreachable!("root errors carry no stage"),
    }
}

fn emit(f: &Failure) {
    let doc = serde_json::json!({ "error": f.body });
    eprintln!("{doc}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            emit(&Failure {
                code: 2,
                body: ErrorBody {
                    stage: "usage".into(),
                    message: e
                        .to_string()
                        .lines()
                        .next()
                        .unwrap_or("")
                        .trim_start_matches("error: ")
                        .to_string(),
                    hint: "run `uqpe --help`".into(),
                },
            });
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            emit(&f);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => match std::env::var("UQPE_THREADS") {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| Failure {
                code: 2,
                body: ErrorBody {
                    stage: "usage".into(),
                    message: format!("UQPE_THREADS=`{v}` is not a positive integer"),
                    hint: "unset UQPE_THREADS or set it to a thread count".into(),
                },
            })?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads.filter(|&t| t > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| runtime("setup", e.to_string(), "thread pool was already initialized"))?;
    }
    match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::TrueUqpe(a) => cmd_true_uqpe(a),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| {
        runtime(
            "output",
            format!("cannot write {}: {e}", path.display()),
            "check that --out points to a writable directory",
        )
    })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| {
        runtime(
            "output",
            format!("cannot create {}: {e}", dir.display()),
            "check that --out points to a writable location",
        )
    })
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

#[derive(Serialize)]
struct Manifest<C: Serialize> {
    schema_version: u32,
    command: &'static str,
    version: &'static str,
    config: C,
    seed: u64,
    input_digest: Option<String>,
    started_unix_secs: u64,
    wall_clock_secs: f64,
    outputs: Vec<String>,
    notes: Vec<String>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Evaluation points: requested taus plus a 0.05-step grid over `[lo, hi]`.
fn evaluation_taus(requested: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let count = (((hi - lo) / 0.05).round() as usize + 1).max(2);
    let grid = if hi > lo { tau_range(lo, hi, count) } else { vec![lo] };
    merge_taus(requested, &grid)
}

fn usage(message: String) -> Failure {
    Failure {
        code: 2,
        body: ErrorBody {
            stage: "usage".into(),
            message,
            hint: "run `uqpe --help`".into(),
        },
    }
}

#[derive(Serialize)]
struct EstimateConfig<'a> {
    data: &'a Path,
    outcome: &'a str,
    treatment: &'a str,
    controls: &'a [String],
    requested_taus: &'a [f64],
    grid_points: usize,
    report_scale: f64,
    core: &'a UqpeConfig,
}

#[derive(Serialize)]
struct ResultsDoc<'a> {
    schema_version: u32,
    requested_taus: &'a [f64],
    rows_used: usize,
    rows_dropped: usize,
    columns: Vec<String>,
    estimate: &'a UqpeEstimate,
}

fn cmd_estimate(a: EstimateArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let started = unix_now();
    let (lo, hi) = (a.upsilon[0], a.upsilon[1]);
    if !(0.0 < lo && lo <= hi && hi < 1.0) {
        return Err(usage(format!("--upsilon {lo},{hi} must satisfy 0 < lo <= hi < 1")));
    }
    if a.grid < 2 {
        return Err(usage("--grid must be at least 2".into()));
    }
    if !(a.report_scale.is_finite() && a.report_scale > 0.0) {
        return Err(usage("--report-scale must be positive".into()));
    }
    let raw = std::fs::read(&a.data).map_err(|e| Failure::from(UqpeError::Io(e)))?;
    let digest = hex::encode(Sha256::digest(&raw));
    let ingested = ingest_csv(&a.data, &a.outcome, &a.treatment, &a.controls)?;
    let dataset = ingested.dataset;
    let glo = (lo - 0.05).max(0.01);
    let ghi = (hi + 0.05).min(0.99);
    let config = UqpeConfig {
        tau_set: evaluation_taus(&a.taus, lo, hi),
        upsilon: (lo, hi),
        grid_taus: tau_range(glo, ghi, a.grid),
        alpha: a.alpha,
        bootstrap_reps: a.bootstrap,
        seed: a.seed,
        estimator: a.estimator,
        ..UqpeConfig::default()
    };
    config.validate()?;
    let models = FittedModels::fit(&dataset, &config, &[a.estimator])?;
    let estimate = estimate_with_models(&dataset, &config, &models, &[a.estimator])?.remove(0);

    create_dir(&a.out)?;
    let mut outputs = Vec::new();
    let columns: Vec<String> = (0..dataset.p()).map(|j| dataset.column_name(j)).collect();
    let results = ResultsDoc {
        schema_version: SCHEMA_VERSION,
        requested_taus: &a.taus,
        rows_used: dataset.n(),
        rows_dropped: ingested.dropped,
        columns,
        estimate: &estimate,
    };
    let path = a.out.join("results.json");
    write_file(&path, &to_json(&results))?;
    outputs.push(path.display().to_string());

    let path = a.out.join("bands.csv");
    write_file(&path, &bands_csv(&estimate, a.report_scale))?;
    outputs.push(path.display().to_string());

    if a.save_model {
        let path = a.out.join("model.json");
        write_file(&path, &to_json(&models))?;
        outputs.push(path.display().to_string());
    }

    print_estimate(&estimate, &a.taus, a.report_scale, ingested.dropped);

    let mut notes = Vec::new();
    if !a.estimator.debias() {
        notes.push(format!("estimator `{}`: no debiasing", a.estimator));
    }
    let path = a.out.join("manifest.json");
    outputs.push(path.display().to_string());
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        command: "estimate",
        version: env!("CARGO_PKG_VERSION"),
        config: EstimateConfig {
            data: &a.data,
            outcome: &a.outcome,
            treatment: &a.treatment,
            controls: &a.controls,
            requested_taus: &a.taus,
            grid_points: a.grid,
            report_scale: a.report_scale,
            core: &config,
        },
        seed: a.seed,
        input_digest: Some(format!("sha256:{digest}")),
        started_unix_secs: started,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        outputs,
        notes,
    };
    write_file(&path, &to_json(&manifest))
}

fn bands_csv(estimate: &UqpeEstimate, scale: f64) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["tau", "estimate", "pw_lo", "pw_hi", "unif_lo", "unif_hi"])
        .expect("in-memory write");
    for r in &estimate.rows {
        let b = &r.uqpe_band;
        let vals = [r.uqpe_hat, b.pointwise.lo, b.pointwise.hi, b.uniform.lo, b.uniform.hi];
        let mut rec = vec![format!("{}", r.tau)];
        rec.extend(vals.iter().map(|v| format!("{}", v * scale)));
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn print_estimate(e: &UqpeEstimate, requested: &[f64], scale: f64, dropped: usize) {
    println!(
        "estimator {}  N={} p={}  dropped rows={}  bandwidth={:.4}",
        e.estimator, e.n, e.p, dropped, e.diagnostics.bandwidth
    );
    println!(
        "{:>6} {:>10} {:>22} {:>22}",
        "tau", "UQPE", "pointwise CI", "uniform band"
    );
    for r in e
        .rows
        .iter()
        .filter(|r| requested.iter().any(|t| (t - r.tau).abs() < 1e-9))
    {
        let b = &r.uqpe_band;
        println!(
            "{:>6.2} {:>10.3} [{:>9.3},{:>9.3}] [{:>9.3},{:>9.3}]",
            r.tau,
            r.uqpe_hat * scale,
            b.pointwise.lo * scale,
            b.pointwise.hi * scale,
            b.uniform.lo * scale,
            b.uniform.hi * scale
        );
    }
    let verdict = match e.zero_test {
        uqpe::bootstrap::Verdict::Reject => "reject",
        uqpe::bootstrap::Verdict::FailToReject => "fail to reject",
    };
    println!(
        "uniform test of UQPE = 0 over [{}, {}]: {verdict}",
        e.upsilon.0, e.upsilon.1
    );
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    spec: DgpSpec,
    reps: usize,
    estimators: &'a [Estimator],
    oracle_n: usize,
    report_taus: &'a [f64],
    core: &'a UqpeConfig,
}

#[derive(Serialize)]
struct MetricsDoc<'a> {
    schema_version: u32,
    spec: DgpSpec,
    tau_set: &'a [f64],
    true_uqpe: &'a [f64],
    studies: &'a [McMetrics],
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let started = unix_now();
    if a.estimator.is_empty() {
        return Err(usage("--estimator needs at least one value".into()));
    }
    let spec = DgpSpec {
        dgp: a.dgp,
        sparsity: a.sparsity,
        n: a.n,
        p: a.p,
        seed: a.seed,
    };
    spec.validate()?;
    let config = UqpeConfig {
        bootstrap_reps: a.bootstrap,
        estimator: a.estimator[0],
        ..UqpeConfig::default()
    };
    config.validate()?;
    let truth = true_uqpe_curve(a.dgp, a.sparsity, a.p, &config.tau_set, a.oracle_n, a.seed)?;
    let metrics =
        run_mc_study(&spec, a.reps, &config, &a.estimator, &truth).map_err(|e| e.at(uqpe::Stage::Simulation))?;

    create_dir(&a.out)?;
    let mut outputs = Vec::new();
    let mut csv_bytes = Vec::new();
    write_metrics_csv(&mut csv_bytes, &metrics, Some(&a.taus))?;
    let path = a.out.join("metrics.csv");
    write_file(&path, &csv_bytes)?;
    outputs.push(path.display().to_string());
    let path = a.out.join("metrics.json");
    let doc = MetricsDoc {
        schema_version: SCHEMA_VERSION,
        spec,
        tau_set: &config.tau_set,
        true_uqpe: &truth,
        studies: &metrics,
    };
    write_file(&path, &to_json(&doc))?;
    outputs.push(path.display().to_string());
    print!("{}", String::from_utf8_lossy(&csv_bytes));

    let path = a.out.join("manifest.json");
    outputs.push(path.display().to_string());
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        version: env!("CARGO_PKG_VERSION"),
        config: SimulateConfig {
            spec,
            reps: a.reps,
            estimators: &a.estimator,
            oracle_n: a.oracle_n,
            report_taus: &a.taus,
            core: &config,
        },
        seed: a.seed,
        input_digest: None,
        started_unix_secs: started,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        outputs,
        notes: a
            .estimator
            .iter()
            .filter(|e| !e.debias())
            .map(|e| format!("estimator `{e}`: no debiasing"))
            .collect(),
    };
    write_file(&path, &to_json(&manifest))
}

fn cmd_true_uqpe(a: TrueArgs) -> Result<(), Failure> {
    let values = true_uqpe_curve(a.dgp, a.sparsity, a.p, &a.taus, a.oracle_n, a.seed)?;
    println!("tau\ttrue_uqpe");
    for (t, v) in a.taus.iter().zip(values) {
        println!("{t:.2}\t{v:.4}");
    }
    Ok(())
}
