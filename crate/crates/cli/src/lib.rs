//! The `sway` command line: simulate, extract, train, evaluate, rank, report.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical non-convergence. Failures print one line to stderr:
//! `error kind=<kind> message="<text>"`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sway_core::evaluation::{evaluate_three_class, run_nested_lopo, tune_c, CVReport, EvalConfig, FeatureTable, NoAudit, ThreeClassMode};
use sway_core::io::{load_dataset, write_dataset, write_feature_table, ModelFile};
use sway_core::kinematics::DEFAULT_ZONE_THRESHOLD_DEG;
use sway_core::ranking::rank_features;
use sway_core::report::{render_cv_report, render_ranking_report, render_summary};
use sway_core::svm::{MultiClassTrainer, SolverConfig};
use sway_core::synth::{generate_dataset, SynthConfig};
use sway_core::{Error, ParticipantId};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sway", version, about = "Balance-exercise rating from trunk sway")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset.
    Simulate(SimulateArgs),
    /// Write the 61-column feature table of a dataset as CSV.
    Extract(ExtractArgs),
    /// Fit a model on a whole dataset and write it as JSON.
    Train(TrainArgs),
    /// Nested leave-one-participant-out evaluation.
    Evaluate(EvaluateArgs),
    /// Backward feature elimination across outer folds.
    Rank(RankArgs),
    /// Render a stored evaluation report as text.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    participants: usize,
    #[arg(long, default_value_t = 18)]
    sessions: u32,
    #[arg(long, default_value_t = 2)]
    sets_per_session: usize,
    #[arg(long, default_value_t = 6)]
    trials: usize,
    #[arg(long, default_value_t = 50.0)]
    sample_rate: f64,
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    /// Probability of moving a therapist rating to a neighbouring level.
    #[arg(long, default_value_t = 0.0)]
    label_noise: f64,
    #[arg(long, default_value_t = 1.0)]
    sway_scale: f64,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory or manifest file.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Tilt magnitude (degrees) above which time counts toward the percentage zone.
    #[arg(long, default_value_t = DEFAULT_ZONE_THRESHOLD_DEG)]
    zone_threshold: f64,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Cost grid: comma-separated values, or `LO..HI` for every power of ten in between.
    #[arg(long, value_parser = parse_grid, default_value = "1e-7..1e3")]
    grid: Grid,
}

#[derive(Debug, Clone)]
struct Grid(Vec<f64>);

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model output file.
    #[arg(long)]
    out: PathBuf,
    /// Fixed cost; otherwise chosen on the grid by leave-one-participant-out.
    #[arg(long, value_parser = parse_positive)]
    c: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    MapPredictions,
    Retrain,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory for report files.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Also evaluate on ratings grouped into three levels.
    #[arg(long)]
    three_class: bool,
    #[arg(long, value_enum, default_value_t = Mode::Retrain)]
    mode: Mode,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory for ranking files.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Restrict elimination to these comma-separated feature keys.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Number of features in the top table.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Stored report JSON.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Write the text here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    parse_grid_values(s).map(Grid)
}

fn parse_grid_values(s: &str) -> Result<Vec<f64>, String> {
    if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi) = (parse_positive(lo)?, parse_positive(hi)?);
        let (a, b) = (lo.log10().round() as i32, hi.log10().round() as i32);
        if 10f64.powi(a) != lo || 10f64.powi(b) != hi || a > b {
            return Err(format!("`{s}` is not an increasing range of powers of ten"));
        }
        return Ok((a..=b).map(|e| 10f64.powi(e)).collect());
    }
    s.split(',').map(parse_positive).collect()
}

enum Failure {
    Usage(String),
    Data(String),
    NonConvergence(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn emit(kind: &str, message: &str) {
    eprintln!("error kind={kind} message={}", serde_json::to_string(message).unwrap_or_default());
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let text = e.to_string();
            emit("usage", text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: "));
            return EXIT_USAGE;
        }
    };
    let outcome = match cli.jobs {
        Some(0) => Err(Failure::Usage("--jobs must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Failure::Usage(e.to_string())),
        },
        None => dispatch(&cli),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            emit("usage", &m);
            EXIT_USAGE
        }
        Err(Failure::Data(m)) => {
            emit("data", &m);
            EXIT_DATA
        }
        Err(Failure::NonConvergence(m)) => {
            emit("nonconvergence", &m);
            EXIT_NONCONVERGENCE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let log = |m: &str| {
        if cli.verbose {
            eprintln!("{m}");
        }
    };
    match &cli.command {
        Command::Simulate(a) => simulate(a, &log),
        Command::Extract(a) => extract(a, &log),
        Command::Train(a) => train(a, &log),
        Command::Evaluate(a) => evaluate(a, &log),
        Command::Rank(a) => rank(a, &log),
        Command::Report(a) => report(a),
    }
}

fn check_zone(d: &DataArgs) -> Result<(), Failure> {
    if d.zone_threshold.is_finite() && d.zone_threshold >= 0.0 {
        Ok(())
    } else {
        Err(Failure::Usage("--zone-threshold must be a non-negative number".into()))
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_table(d: &DataArgs, log: &dyn Fn(&str)) -> Result<FeatureTable, Failure> {
    check_zone(d)?;
    let ds = load_dataset(&d.input)?;
    log(&format!("loaded {} sets from {} participants", ds.sets.len(), ds.participants.len()));
    Ok(FeatureTable::from_dataset(&ds, d.zone_threshold)?)
}

fn simulate(a: &SimulateArgs, log: &dyn Fn(&str)) -> Result<(), Failure> {
    let cfg = SynthConfig {
        seed: a.seed,
        n_participants: a.participants,
        sessions_per_participant: a.sessions,
        sets_per_session: a.sets_per_session,
        trials_per_set: a.trials,
        sample_rate_hz: a.sample_rate,
        trial_duration_s: a.duration,
        label_noise: a.label_noise,
        difficulty_sway_scale: a.sway_scale,
        ..SynthConfig::default()
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let ds = generate_dataset(&cfg)?;
    write_dataset(&a.out, &ds)?;
    log(&format!("wrote {} sets to {}", ds.sets.len(), a.out.display()));
    Ok(())
}

fn extract(a: &ExtractArgs, log: &dyn Fn(&str)) -> Result<(), Failure> {
    check_zone(&a.data)?;
    let ds = load_dataset(&a.data.input)?;
    let mut buf = Vec::new();
    write_feature_table(&mut buf, &ds, a.data.zone_threshold)?;
    fs::write(&a.out, buf).map_err(|e| Failure::Data(format!("{}: {e}", a.out.display())))?;
    log(&format!("wrote {} rows to {}", ds.sets.len(), a.out.display()));
    Ok(())
}

fn train(a: &TrainArgs, log: &dyn Fn(&str)) -> Result<(), Failure> {
    let table = load_table(&a.data, log)?;
    let solver = SolverConfig::default();
    let c = match a.c {
        Some(c) => c,
        None => {
            let rows: Vec<usize> = (0..table.len()).collect();
            let tuned = tune_c(&table, &rows, &ParticipantId::new("-"), &a.grid.grid.0, &solver, &NoAudit)?;
            log(&format!("chose C = {:e}", tuned.c));
            tuned.c
        }
    };
    let model = MultiClassTrainer::new(&table.rows, &table.labels, None, solver)?.fit(c);
    let converged = model.all_converged();
    ModelFile::new(model, c, a.data.zone_threshold, table.feature_names.clone()).write(&a.out)?;
    if !converged {
        return Err(Failure::NonConvergence("solver hit its iteration cap; model written".into()));
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs, log: &dyn Fn(&str)) -> Result<(), Failure> {
    let table = load_table(&a.data, log)?;
    let cfg = EvalConfig { grid: a.grid.grid.0.clone(), solver: SolverConfig::default() };
    create_dir(&a.out)?;
    let five = run_nested_lopo(&table, &cfg, &NoAudit)?;
    log(&format!("five-level accuracy {:.4}", five.overall_accuracy));
    write_json(&a.out.join("report.json"), &five)?;
    let mut text = render_cv_report(&five, "Five-level classification");
    let mut non_converged = five.non_converged_folds;
    if a.three_class {
        let mode = match a.mode {
            Mode::MapPredictions => ThreeClassMode::MapPredictions,
            Mode::Retrain => ThreeClassMode::Retrain,
        };
        let three = evaluate_three_class(mode, &table, Some(&five), &cfg, &NoAudit)?;
        log(&format!("three-level accuracy {:.4}", three.overall_accuracy));
        write_json(&a.out.join("report_three_class.json"), &three)?;
        non_converged += three.non_converged_folds;
        text.push_str("\n\n");
        text.push_str(&render_cv_report(&three, "Three-level classification"));
        text.push_str("\n\nSummary (mean ± sd over folds)\n");
        text.push_str(&render_summary(&[("Five-class", &five), ("Three-class", &three)]));
    }
    write_text(&a.out.join("report.txt"), &text)?;
    if non_converged > 0 {
        return Err(Failure::NonConvergence(format!(
            "{non_converged} fold(s) had solves that hit the iteration cap; reports written"
        )));
    }
    Ok(())
}

fn rank(a: &RankArgs, log: &dyn Fn(&str)) -> Result<(), Failure> {
    let mut table = load_table(&a.data, log)?;
    if let Some(keys) = &a.features {
        let cols = keys
            .iter()
            .map(|k| {
                table
                    .feature_names
                    .iter()
                    .position(|n| n == k)
                    .ok_or_else(|| Failure::Usage(format!("unknown feature `{k}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        table = table.select_columns(&cols);
    }
    let cfg = EvalConfig { grid: a.grid.grid.0.clone(), solver: SolverConfig::default() };
    create_dir(&a.out)?;
    let ranking = rank_features(&table, &cfg, &NoAudit)?;
    write_json(&a.out.join("ranking.json"), &ranking)?;
    write_text(&a.out.join("ranking.txt"), &render_ranking_report(&ranking, a.top))?;
    log(&format!("ranked {} features over {} folds", table.n_features(), ranking.folds.len()));
    Ok(())
}

fn report(a: &ReportArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.input).map_err(|e| Failure::Data(format!("{}: {e}", a.input.display())))?;
    let r: CVReport = serde_json::from_str(&text)
        .map_err(|e| Failure::Data(format!("{}:{}: {e}", a.input.display(), e.line())))?;
    let rendered = render_cv_report(&r, "Classification report");
    match &a.out {
        Some(p) => write_text(p, &rendered),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}
