use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use covshift::data::{load_csv, save_csv, Dataset, LabelColumn, Labels, Task};
use covshift::ess::{empirical_ess, generalization_bound, BoundParams, WeightVector};
use covshift::experiments::{generate_friedman, run_benchmark, run_toy, BenchConfig, ToyConfig};
use covshift::gmm::SelectConfig;
use covshift::logistic::TuningConfig;
use covshift::mi::{backward_eliminate, forward_select, MiConfig, SelectionResult};
use covshift::ratio::{fit_density_ratio, predict_weights};
use covshift::rng::seeded;
use covshift::shift::{calibrate_sigma, sample_direction};
use serde::Serialize;

mod config;
mod report;

use report::{emit_report, json_number, read_column, write_column, write_json, Format};

/// Failure carrying the process exit code: 1 for invalid input or usage,
/// 2 for runtime failures.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
}

impl From<covshift::Error> for CliError {
    fn from(e: covshift::Error) -> Self {
        use covshift::Error as E;
        let code = match e {
            E::Io { .. } | E::Calibration(_) | E::Numerical(_) => 2,
            _ => 1,
        };
        CliError { code, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

const GRID_HELP: &str = "Fixed settings: ratio models tune C over 10 log-spaced values in [1e-4, 5] \
(override with --c-min/--c-max/--grid-size where offered); trees tune min-samples-leaf over \
{5, 15, 25, 40, 50} by 2-fold cross-validation; mixtures scan 1..15 components on a 50/50 holdout.";

#[derive(Parser, Debug)]
#[command(name = "covshift", version, about = "Importance weighting diagnostics and covariate-shift experiments")]
#[command(after_help = GRID_HELP)]
struct Cli {
    /// Worker threads for parallel runners [default: available parallelism]
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Flat `key = value` file supplying flag values; explicit flags win
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; required by inject, fit-ratio, mi-select, toy and bench
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Empirical effective sample size of a weight file
    Ess(EssArgs),
    /// Generalization bound for given ESS*, hypothesis dimension, n and delta
    Bound(BoundArgs),
    /// Split a dataset into train/test with a calibrated synthetic shift
    #[command(after_help = GRID_HELP)]
    Inject(InjectArgs),
    /// Fit a probabilistic classifier density-ratio model; write source weights
    #[command(after_help = GRID_HELP)]
    FitRatio(FitRatioArgs),
    /// Mutual-information feature selection (forward, or backward elimination)
    #[command(after_help = GRID_HELP)]
    MiSelect(MiSelectArgs),
    /// Gaussian toy study: weighted-tree RMSE as the shift dimension grows
    Toy(ToyArgs),
    /// Four-scenario benchmark over injected shifts
    #[command(after_help = GRID_HELP)]
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct EssArgs {
    /// One-column CSV of nonnegative weights (optional header row)
    #[arg(long)]
    weights: PathBuf,
}

#[derive(Args, Debug)]
struct BoundArgs {
    /// Population effective sample size in (0, 1]
    #[arg(long)]
    ess_star: f64,
    /// Pseudo-dimension of the hypothesis class
    #[arg(long)]
    pdim: u64,
    /// Number of training rows
    #[arg(long)]
    n: u64,
    /// Failure probability
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
}

#[derive(Args, Debug)]
struct CsvInput {
    /// Treat the first row as data rather than a header
    #[arg(long)]
    no_header: bool,
    /// Label column, by header name or 0-based index
    #[arg(long)]
    label: Option<String>,
}

impl CsvInput {
    fn load(&self, path: &Path) -> CliResult<Dataset> {
        let label = self.label.as_deref().map(|s| s.parse::<LabelColumn>().expect("infallible"));
        Ok(load_csv(path, !self.no_header, label.as_ref())?)
    }
}

#[derive(Args, Debug)]
struct InjectArgs {
    /// Input CSV
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    csv: CsvInput,
    /// Calibrate until the training-side ESS of the true weights is below this
    #[arg(long, default_value_t = 0.01)]
    ess_target: f64,
    /// Directions tried before giving up
    #[arg(long, default_value_t = 20)]
    max_draws: usize,
    /// Output directory for train.csv, test.csv, train_weights.csv, shift.json
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct FitRatioArgs {
    /// Source (training) CSV; weights are produced for its rows
    #[arg(long)]
    source: PathBuf,
    /// Target (test) CSV
    #[arg(long)]
    target: PathBuf,
    #[command(flatten)]
    csv: CsvInput,
    /// Smallest inverse regularization strength in the grid
    #[arg(long, default_value_t = 1e-4)]
    c_min: f64,
    /// Largest inverse regularization strength in the grid
    #[arg(long, default_value_t = 5.0)]
    c_max: f64,
    /// Number of log-spaced grid values
    #[arg(long, default_value_t = 10)]
    grid_size: usize,
    /// Output CSV with one `weight` column
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON dump of the fitted model
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Regression => Task::Regression,
            TaskArg::Classification => Task::Classification,
        }
    }
}

#[derive(Args, Debug)]
struct SelectionArgs {
    /// Stop when the gain is below this fraction of the previous level
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    /// Most features to select
    #[arg(long, default_value_t = 15)]
    max_features: usize,
    /// Largest mixture size scanned (scan starts at 1)
    #[arg(long, default_value_t = 15)]
    gmm_max_components: usize,
    /// Stop the component scan after this many sizes without holdout gain (0 scans all)
    #[arg(long, default_value_t = 3)]
    gmm_patience: usize,
}

impl SelectionArgs {
    fn config(&self) -> CliResult<MiConfig> {
        if self.gmm_max_components == 0 {
            return Err(CliError::usage("--gmm-max-components must be at least 1"));
        }
        let cfg = MiConfig {
            improvement_threshold: self.threshold,
            max_features: self.max_features,
            selection: SelectConfig {
                k_max: self.gmm_max_components,
                patience: (self.gmm_patience > 0).then_some(self.gmm_patience),
                ..SelectConfig::default()
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct MiSelectArgs {
    /// Labeled input CSV
    #[arg(long)]
    input: PathBuf,
    /// Treat the first row as data rather than a header
    #[arg(long)]
    no_header: bool,
    /// Label column, by header name or 0-based index
    #[arg(long)]
    label: String,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[command(flatten)]
    selection: SelectionArgs,
    /// Use backward elimination instead of forward selection
    #[arg(long)]
    backward: bool,
    /// Output JSON path [default: standard output]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ToyArgs {
    /// Comma-separated shift sizes
    #[arg(long, value_delimiter = ',', required = true)]
    lambdas: Vec<f64>,
    /// Comma-separated dimensions
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    /// Rows in each of the training and test sets
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    /// Replications per (lambda, dimension)
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Minimum rows per tree leaf
    #[arg(long, default_value_t = 10)]
    min_leaf: usize,
    /// Output path [default: standard output]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Labeled input CSV (or use --friedman)
    #[arg(long, conflicts_with = "friedman", required_unless_present = "friedman")]
    input: Option<PathBuf>,
    /// Generate a synthetic friedman-style regression dataset with this many rows
    #[arg(long)]
    friedman: Option<usize>,
    #[command(flatten)]
    csv: CsvInput,
    #[arg(long, value_enum, default_value_t = TaskArg::Regression)]
    task: TaskArg,
    /// Independent shift injections
    #[arg(long, default_value_t = 20)]
    simulations: usize,
    /// Calibration target for the true-weight ESS
    #[arg(long, default_value_t = 0.01)]
    ess_target: f64,
    /// Total feature width after appending N(0,1) noise columns
    #[arg(long, default_value_t = 32)]
    noise_width: usize,
    /// Rows kept per simulation
    #[arg(long, default_value_t = 8000)]
    max_rows: usize,
    /// Share of the test side used to fit ratio models
    #[arg(long, default_value_t = 0.8)]
    ratio_fraction: f64,
    /// Directions tried per simulation before it is skipped
    #[arg(long, default_value_t = 20)]
    max_draws: usize,
    #[command(flatten)]
    selection: SelectionArgs,
    /// Output path [default: standard output]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn require_seed(seed: Option<u64>, command: &str) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::usage(format!("`{command}` is stochastic and needs --seed")))
}

fn cmd_ess(a: &EssArgs) -> CliResult<()> {
    let w = WeightVector::new(read_column(&a.weights)?)?;
    println!("{}", json_number(empirical_ess(&w)));
    Ok(())
}

fn cmd_bound(a: &BoundArgs) -> CliResult<()> {
    let v = generalization_bound(&BoundParams { ess_star: a.ess_star, pdim: a.pdim, n: a.n, delta: a.delta })?;
    println!("{}", json_number(v));
    Ok(())
}

#[derive(Serialize)]
struct InjectRecord<'a> {
    seed: u64,
    ess_target: f64,
    direction: &'a [f64],
    sigma: f64,
    ess: f64,
    halvings: usize,
    direction_draws: usize,
    n_train: usize,
    n_test: usize,
}

fn cmd_inject(a: &InjectArgs, seed: u64) -> CliResult<()> {
    if a.max_draws == 0 {
        return Err(CliError::usage("--max-draws must be at least 1"));
    }
    let ds = a.csv.load(&a.input)?;
    let mut rng = seeded(seed);
    let mut found = None;
    for draw in 1..=a.max_draws {
        let u = sample_direction(ds.n_features(), &mut rng);
        match calibrate_sigma(ds.features(), &u, &mut rng, a.ess_target) {
            Ok(assignment) => {
                found = Some((assignment, draw));
                break;
            }
            Err(covshift::Error::Calibration(msg)) if draw < a.max_draws => {
                eprintln!("direction {draw}: {msg}; redrawing");
            }
            Err(e) => return Err(e.into()),
        }
    }
    let (assignment, draws) = found.expect("loop returns or finds an assignment");
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::runtime(format!("{}: {e}", a.out_dir.display())))?;
    let train = ds.select_rows(&assignment.train_rows());
    let test = ds.select_rows(&assignment.test_rows());
    save_csv(&train, a.out_dir.join("train.csv"))?;
    save_csv(&test, a.out_dir.join("test.csv"))?;
    write_column(&a.out_dir.join("train_weights.csv"), "weight", assignment.true_weights_train.as_slice())?;
    let record = InjectRecord {
        seed,
        ess_target: a.ess_target,
        direction: &assignment.direction,
        sigma: assignment.sigma,
        ess: assignment.ess,
        halvings: assignment.halvings,
        direction_draws: draws,
        n_train: train.n_rows(),
        n_test: test.n_rows(),
    };
    write_json(&record, Some(&a.out_dir.join("shift.json")))
}

#[derive(Serialize)]
struct RatioSummary {
    chosen_c: f64,
    holdout_log_loss: f64,
    n_source: usize,
    n_target: usize,
    ess: f64,
}

fn cmd_fit_ratio(a: &FitRatioArgs, seed: u64) -> CliResult<()> {
    let source = a.csv.load(&a.source)?;
    let target = a.csv.load(&a.target)?;
    let tuning = TuningConfig { c_min: a.c_min, c_max: a.c_max, grid_size: a.grid_size, ..TuningConfig::default() };
    let mut rng = seeded(seed);
    let (model, summary) = fit_density_ratio(source.features(), target.features(), &tuning, &mut rng)?;
    let w = predict_weights(&model, source.features())?;
    write_column(&a.out, "weight", w.as_slice())?;
    if let Some(path) = &a.model {
        write_json(&model, Some(path))?;
    }
    write_json(
        &RatioSummary {
            chosen_c: summary.chosen_c,
            holdout_log_loss: summary.holdout_log_loss,
            n_source: summary.n_source,
            n_target: summary.n_target,
            ess: empirical_ess(&w),
        },
        None,
    )
}

#[derive(Serialize)]
struct MiOutput<'a> {
    method: &'static str,
    task: Task,
    #[serde(flatten)]
    result: &'a SelectionResult,
    selected_names: Vec<&'a str>,
}

fn labels_for(ds: &Dataset, task: Task) -> CliResult<Labels> {
    let labels = ds.labels().ok_or_else(|| CliError::usage("input has no label column"))?;
    Ok(labels.for_task(task)?)
}

fn cmd_mi_select(a: &MiSelectArgs, seed: u64) -> CliResult<()> {
    let config = a.selection.config()?;
    let label = a.label.parse::<LabelColumn>().expect("infallible");
    let ds = load_csv(&a.input, !a.no_header, Some(&label))?;
    let task = Task::from(a.task);
    let labels = labels_for(&ds, task)?;
    let mut rng = seeded(seed);
    let result = if a.backward {
        backward_eliminate(ds.features(), &labels, &config, &mut rng)?
    } else {
        forward_select(ds.features(), &labels, &config, &mut rng)?
    };
    let names = result.selected.iter().map(|&i| ds.feature_names()[i].as_str()).collect();
    let out = MiOutput {
        method: if a.backward { "backward" } else { "forward" },
        task,
        result: &result,
        selected_names: names,
    };
    write_json(&out, a.out.as_deref())
}

fn cmd_toy(a: &ToyArgs, seed: u64) -> CliResult<()> {
    let mut config = ToyConfig::new(a.lambdas.clone(), a.dims.clone(), a.n, a.reps, seed);
    config.min_samples_leaf = a.min_leaf;
    let report = run_toy(&config)?;
    emit_report(&report, &report.table(), a.out.as_deref(), a.format)
}

fn cmd_bench(a: &BenchArgs, seed: u64) -> CliResult<()> {
    let task = Task::from(a.task);
    let ds = match (&a.input, a.friedman) {
        (Some(path), _) => a.csv.load(path)?,
        (None, Some(n)) => generate_friedman(n, &mut seeded(covshift::rng::derive_seed(seed, &[u64::MAX])))?,
        (None, None) => return Err(CliError::usage("give --input or --friedman")),
    };
    let config = BenchConfig {
        simulations: a.simulations,
        ess_target: a.ess_target,
        noise_target_width: a.noise_width,
        max_rows: a.max_rows,
        selection: a.selection.config()?,
        ratio_tuning: TuningConfig::default(),
        ratio_train_fraction: a.ratio_fraction,
        max_direction_draws: a.max_draws,
        seed,
    };
    let report = run_benchmark(&ds, &config, task)?;
    emit_report(&report, &report.table(), a.out.as_deref(), a.format)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Ess(a) => cmd_ess(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Inject(a) => cmd_inject(a, require_seed(cli.seed, "inject")?),
        Command::FitRatio(a) => cmd_fit_ratio(a, require_seed(cli.seed, "fit-ratio")?),
        Command::MiSelect(a) => cmd_mi_select(a, require_seed(cli.seed, "mi-select")?),
        Command::Toy(a) => cmd_toy(a, require_seed(cli.seed, "toy")?),
        Command::Bench(a) => cmd_bench(a, require_seed(cli.seed, "bench")?),
    }
}

fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    let result = config::merge_config(args).and_then(|args| {
        Cli::try_parse_from(args).map_err(|e| {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            CliError { code, message: String::new() }
        })
    });
    let outcome = result.and_then(run);
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(e.code)
        }
    }
}
