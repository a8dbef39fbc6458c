//! The `micvar` binary: lag-order selection, simulation, Monte Carlo
//! experiments, and rolling-forecast evaluation for vector
//! autoregressions.
//!
//! Exit codes: 0 success, 2 data or configuration error, 3 numerical
//! failure. Primary output files are written atomically and are
//! byte-identical across runs with identical inputs and seeds.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use micvar::error::AppError;
use micvar::io;
use micvar::parallel;
use micvar::schema;

use micvar_core::criteria::{self, CriterionKind, PenaltyDetail, SelectionResult};
use micvar_core::estimation;
use micvar_core::experiments::{build_process, ExperimentResult};
use micvar_core::forecasting::{self, ForecastProtocol};
use micvar_core::timeseries::TimeSeries;
use micvar_core::var_process::simulate;

#[derive(Parser)]
#[command(
    name = "micvar",
    version,
    about = "Lag-order selection and forecast evaluation for vector autoregressions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select a lag order for a CSV series under one or more criteria
    Select(SelectArgs),
    /// Simulate a process described by a JSON spec into a CSV series
    Simulate(SimulateArgs),
    /// Run a Monte Carlo order-selection experiment from a JSON config
    Experiment(ExperimentArgs),
    /// Evaluate rolling-window one-step forecasts on a CSV series
    Forecast(ForecastArgs),
}

#[derive(Args)]
struct TransformFlags {
    /// Natural-log transform (applied first; requires positive data)
    #[arg(long)]
    log: bool,
    /// First-difference (applied after --log)
    #[arg(long)]
    diff: bool,
    /// Subtract column means (applied last; selection demeans internally
    /// either way)
    #[arg(long)]
    demean: bool,
}

#[derive(Args)]
struct SelectArgs {
    /// Input CSV path
    #[arg(long)]
    input: PathBuf,
    /// Treat the first CSV row as a header
    #[arg(long)]
    header: bool,
    /// Largest candidate order
    #[arg(long, default_value_t = 10)]
    pmax: usize,
    /// Comma-separated criteria (mic, mic-oracle, mic-sp, mic-mt, aic,
    /// bic, hq) or "all" for mic,aic,bic,hq
    #[arg(long, default_value = "all")]
    criteria: String,
    /// Fixed penalty slope, required by mic-oracle
    #[arg(long)]
    oracle_lambda: Option<f64>,
    #[command(flatten)]
    transforms: TransformFlags,
    /// Write the JSON report here (default: standard output)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write per-criterion (p, score) CSV files derived from this path
    #[arg(long)]
    scores_csv: Option<PathBuf>,
    /// Write the underlying per-order fit grid (coefficients, residual
    /// moments, losses) as JSON here
    #[arg(long)]
    dump_fits: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Process spec JSON path
    #[arg(long)]
    spec: PathBuf,
    /// Series length to simulate
    #[arg(long)]
    n: usize,
    /// Seed for both process construction and noise
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON path
    #[arg(long)]
    config: PathBuf,
    /// Output tidy CSV path
    #[arg(long)]
    output: PathBuf,
    /// Worker threads (default: MICVAR_THREADS, then all cores);
    /// results are identical for every thread count
    #[arg(long)]
    threads: Option<usize>,
    /// Also write plot-ready CSVs (accuracy_vs_n.csv, over_under.csv)
    /// into this directory
    #[arg(long)]
    emit_plot_data: Option<PathBuf>,
}

#[derive(Args)]
struct ForecastArgs {
    /// Input CSV path
    #[arg(long)]
    input: PathBuf,
    /// Treat the first CSV row as a header
    #[arg(long)]
    header: bool,
    /// Largest candidate order
    #[arg(long, default_value_t = 10)]
    pmax: usize,
    /// Comma-separated criteria or "all" for mic,aic,bic,hq
    #[arg(long, default_value = "all")]
    criteria: String,
    /// Fixed penalty slope, required by mic-oracle
    #[arg(long)]
    oracle_lambda: Option<f64>,
    /// Fraction of the sample used for selection and as the window length
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    #[command(flatten)]
    transforms: TransformFlags,
    /// Write the JSON report here (default: standard output)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write per-criterion forecast errors as tidy CSV here
    #[arg(long)]
    errors_csv: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Select(args) => cmd_select(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Forecast(args) => cmd_forecast(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn read_series(path: &Path, header: bool) -> Result<TimeSeries, AppError> {
    io::read_csv(path, header).map_err(|e| AppError::csv(path, e))
}

/// Applies the transform flags in the fixed order log, diff, demean and
/// returns the names of the applied steps.
fn apply_transforms(
    series: TimeSeries,
    flags: &TransformFlags,
) -> Result<(TimeSeries, Vec<String>), AppError> {
    let mut series = series;
    let mut applied = Vec::new();
    if flags.log {
        let (s, _) = series.log_transform()?;
        series = s;
        applied.push(String::from("log"));
    }
    if flags.diff {
        let (s, _) = series.first_difference()?;
        series = s;
        applied.push(String::from("diff"));
        eprintln!(
            "note: differenced the series; stationarity diagnostics (ADF/KPSS) \
             are out of scope here, check them with an external tool"
        );
    }
    if flags.demean {
        let (s, _) = series.demean();
        series = s;
        applied.push(String::from("demean"));
    }
    Ok((series, applied))
}

/// Parses the --criteria flag into concrete criteria; "all" is the four
/// whole-sample rules.
fn parse_criteria_flag(
    flag: &str,
    oracle_lambda: Option<f64>,
) -> Result<Vec<CriterionKind>, AppError> {
    let names: Vec<&str> = if flag == "all" {
        vec!["mic", "aic", "bic", "hq"]
    } else {
        flag.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
    };
    if names.is_empty() {
        return Err(AppError::BadArgs(String::from("no criteria requested")));
    }
    names
        .into_iter()
        .map(|name| match name {
            "mic" => Ok(CriterionKind::Mic),
            "mic-oracle" => match oracle_lambda {
                Some(lambda) => Ok(CriterionKind::MicOracle { lambda }),
                None => Err(AppError::BadArgs(String::from(
                    "mic-oracle needs --oracle-lambda (data alone cannot tune it)",
                ))),
            },
            "mic-sp" => Ok(CriterionKind::MicSp),
            "mic-mt" => Ok(CriterionKind::MicMt),
            "aic" => Ok(CriterionKind::Aic),
            "bic" => Ok(CriterionKind::Bic),
            "hq" => Ok(CriterionKind::Hq),
            other => Err(AppError::BadArgs(format!(
                "unknown criterion {other:?} (expected mic, mic-oracle, mic-sp, mic-mt, aic, bic, hq)"
            ))),
        })
        .collect()
}

fn write_or_print(json: &str, output: Option<&Path>) -> Result<(), AppError> {
    match output {
        Some(path) => {
            io::write_atomic(path, json.as_bytes()).map_err(|e| AppError::io(path, e))
        }
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn penalty_brief(p: &PenaltyDetail) -> String {
    match p {
        PenaltyDetail::SelfTuned {
            mean_difference,
            lambda,
        } => format!("lambda={lambda:.6} (self-tuned, MD={mean_difference:.6})"),
        PenaltyDetail::Fixed { lambda } => format!("lambda={lambda:.6} (fixed)"),
        PenaltyDetail::Split { lambda } => format!("lambda={lambda:.6} (split)"),
        PenaltyDetail::Unpenalized => String::from("-"),
    }
}

fn print_selection_table(results: &[SelectionResult]) {
    eprintln!("{:<12} {:>6}  penalty", "criterion", "chosen");
    for r in results {
        eprintln!(
            "{:<12} {:>6}  {}",
            r.criterion.name(),
            r.chosen_order,
            penalty_brief(&r.penalty)
        );
        for w in &r.warnings {
            eprintln!("  warning: {w}");
        }
    }
}

/// Derives the per-criterion scores path: the given path for a single
/// criterion, otherwise the criterion name is spliced in before the
/// extension.
fn scores_path(base: &Path, criterion: &str, multiple: bool) -> PathBuf {
    if !multiple {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("scores");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    base.with_file_name(format!("{stem}-{criterion}.{ext}"))
}

fn cmd_select(args: SelectArgs) -> Result<(), AppError> {
    let kinds = parse_criteria_flag(&args.criteria, args.oracle_lambda)?;
    let series = read_series(&args.input, args.header)?;
    let (series, transforms) = apply_transforms(series, &args.transforms)?;

    let results: Vec<SelectionResult> = kinds
        .iter()
        .map(|kind| criteria::select_order(&series, args.pmax, kind))
        .collect::<Result<_, _>>()?;

    if let Some(path) = &args.dump_fits {
        // The self-tuned MIC reads losses out to twice the candidate
        // bound, so the dump covers the widest grid any criterion saw.
        let reach = if kinds.iter().any(|k| matches!(k, CriterionKind::Mic)) {
            2 * args.pmax
        } else {
            args.pmax
        };
        let fits = estimation::sample_loss_curve(&series, reach)?;
        let doc = schema::FitsOutputJson::new(series.len(), series.dim(), &fits);
        io::write_atomic(path, schema::to_json_pretty(&doc).as_bytes())
            .map_err(|e| AppError::io(path, e))?;
    }

    if let Some(base) = &args.scores_csv {
        let multiple = results.len() > 1;
        for r in &results {
            let mut csv = String::from("p,score\n");
            for (p, score) in r.scores.iter().enumerate() {
                csv.push_str(&format!("{p},{score}\n"));
            }
            let path = scores_path(base, r.criterion.name(), multiple);
            io::write_atomic(&path, csv.as_bytes()).map_err(|e| AppError::io(&path, e))?;
        }
    }

    print_selection_table(&results);
    let doc = schema::SelectionOutputJson::new(args.pmax, transforms, &results);
    write_or_print(&schema::to_json_pretty(&doc), args.output.as_deref())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), AppError> {
    let text = fs::read_to_string(&args.spec).map_err(|e| AppError::io(&args.spec, e))?;
    let spec = schema::ProcessFileJson::parse(&text)
        .map_err(|msg| AppError::json(&args.spec, msg))?;
    let built = build_process(&spec, args.seed)?;
    let series = simulate(&built.coefficients, &built.noise, args.n, args.seed)?;
    io::write_csv(&series, &args.output).map_err(|e| AppError::csv(&args.output, e))?;
    eprintln!(
        "wrote {} observations of a {}-dimensional order-{} process to {}",
        args.n,
        series.dim(),
        built.true_order,
        args.output.display()
    );
    Ok(())
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, AppError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("MICVAR_THREADS") {
        Ok(value) => value
            .parse::<usize>()
            .map(Some)
            .map_err(|_| AppError::BadArgs(format!("MICVAR_THREADS={value:?} is not a number"))),
        Err(_) => Ok(None),
    }
}

fn print_experiment_summary(result: &ExperimentResult) {
    eprintln!(
        "{} (true order {}, {} replicates per cell)",
        result.setting_name, result.true_order, result.replicates
    );
    eprintln!(
        "{:<12} {:>6} {:>9} {:>7} {:>6} {:>6} {:>6}",
        "criterion", "n", "accuracy", "se", "over", "under", "fail"
    );
    for cell in &result.cells {
        eprintln!(
            "{:<12} {:>6} {:>9.3} {:>7.3} {:>6.3} {:>6.3} {:>6.3}",
            cell.criterion.name(),
            cell.n,
            cell.accuracy,
            cell.std_error,
            cell.over_rate,
            cell.under_rate,
            cell.failure_rate
        );
    }
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), AppError> {
    let text = fs::read_to_string(&args.config).map_err(|e| AppError::io(&args.config, e))?;
    let config = schema::ExperimentConfigJson::parse(&text)
        .map_err(|msg| AppError::json(&args.config, msg))?;
    let threads = resolve_threads(args.threads)?;
    let result = parallel::run_experiment_parallel(config, threads)?;

    let csv = schema::experiment_result_to_csv(&result);
    io::write_atomic(&args.output, csv.as_bytes()).map_err(|e| AppError::io(&args.output, e))?;

    if let Some(dir) = &args.emit_plot_data {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        let acc = dir.join("accuracy_vs_n.csv");
        io::write_atomic(&acc, schema::accuracy_wide_csv(&result).as_bytes())
            .map_err(|e| AppError::io(&acc, e))?;
        let ou = dir.join("over_under.csv");
        io::write_atomic(&ou, schema::over_under_csv(&result).as_bytes())
            .map_err(|e| AppError::io(&ou, e))?;
    }

    print_experiment_summary(&result);
    Ok(())
}

fn cmd_forecast(args: ForecastArgs) -> Result<(), AppError> {
    let kinds = parse_criteria_flag(&args.criteria, args.oracle_lambda)?;
    let series = read_series(&args.input, args.header)?;
    let (series, transforms) = apply_transforms(series, &args.transforms)?;

    let protocol = ForecastProtocol {
        split_fraction: args.split,
        p_max: args.pmax,
        criteria: kinds,
    };
    let report = forecasting::evaluate(&series, &protocol)?;

    if let Some(path) = &args.errors_csv {
        let csv = schema::forecast_errors_csv(&report);
        io::write_atomic(path, csv.as_bytes()).map_err(|e| AppError::io(path, e))?;
    }

    eprintln!(
        "{} windows of length {} ({} forecasts per criterion)",
        report.windows, report.window_length, report.windows
    );
    eprintln!("{:<12} {:>6} {:>10}", "criterion", "order", "wmsfe");
    for c in &report.per_criterion {
        eprintln!(
            "{:<12} {:>6} {:>10.4}",
            c.criterion.name(),
            c.chosen_order,
            c.wmsfe
        );
    }

    let doc = schema::ForecastOutputJson::new(&report, transforms);
    write_or_print(&schema::to_json_pretty(&doc), args.output.as_deref())
}
