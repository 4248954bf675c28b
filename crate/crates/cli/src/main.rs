use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hawkesp::harness::{run_experiment, write_report, ExperimentConfig};
use hawkesp::inference::InitStrategy;
use hawkesp::io::{read_events, read_model, write_event_times, write_events};
use hawkesp::mean_intensity::{mean_intensity_table, Method};
use hawkesp::selection::{select_order_with, AiccThreshold};
use hawkesp::simulate::{simulate_count, simulate_horizon};
use hawkesp::{fit, Criterion, FitOptions, HawkesError};

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "HAWKESP_THREADS";

#[derive(Parser)]
#[command(name = "hawkesp", version, about = "Exponential Hawkes-P simulation, estimation and order selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a path by thinning and write it as CSV.
    Simulate(SimulateArgs),
    /// Maximum-likelihood fit of one model order.
    Fit(FitArgs),
    /// Fit several orders and pick one by an information criterion.
    Select(SelectArgs),
    /// Tabulate the mean intensity and expected count of a model.
    Intensity(IntensityArgs),
    /// Run a Monte-Carlo experiment from a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model JSON: {"mu", "alpha": [..], "beta": [..]}
    #[arg(long)]
    model: PathBuf,
    /// Simulate on [0, T].
    #[arg(long, conflicts_with = "count", required_unless_present = "count")]
    horizon: Option<f64>,
    /// Simulate until this many events.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; a `<out>.json` sidecar records the horizon. Stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EventsArgs {
    /// Events CSV with header `t`.
    #[arg(long)]
    events: PathBuf,
    /// Observation horizon; defaults to the sidecar or the last event.
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Args)]
struct FitSettings {
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    /// Use random starts only, without the moment-based first start.
    #[arg(long)]
    random_starts: bool,
}

impl FitSettings {
    fn options(&self) -> FitOptions {
        FitOptions {
            restarts: self.restarts,
            seed: self.seed,
            max_iterations: self.max_iterations,
            init_strategy: if self.random_starts {
                InitStrategy::Random
            } else {
                InitStrategy::MomentThenRandom
            },
            ..FitOptions::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    events: EventsArgs,
    #[arg(long)]
    order: usize,
    #[command(flatten)]
    settings: FitSettings,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    events: EventsArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    orders: Vec<usize>,
    /// aic, aicc, bic, hq or aicc_aic
    #[arg(long, default_value = "bic")]
    criterion: Criterion,
    /// Combined rule: use AICc below this sample size.
    #[arg(long, default_value_t = 120, conflicts_with = "aicc_per_parameter")]
    aicc_threshold: usize,
    /// Combined rule: use AICc when n < FACTOR * k_max instead.
    #[arg(long, value_name = "FACTOR")]
    aicc_per_parameter: Option<usize>,
    #[command(flatten)]
    settings: FitSettings,
}

#[derive(Args)]
struct IntensityArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    t_max: f64,
    #[arg(long, default_value_t = 101)]
    n_points: usize,
    /// analytic, general or volterra
    #[arg(long, default_value = "analytic")]
    method: Method,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the replication count.
    #[arg(long)]
    scale: Option<usize>,
    /// Output directory; defaults to the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(command: Command) -> hawkesp::Result<()> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Fit(args) => {
            let events = load_events(&args.events)?;
            let result = fit(&events, args.order, &args.settings.options())?;
            print_json(&result)
        }
        Command::Select(args) => {
            let events = load_events(&args.events)?;
            let threshold = match args.aicc_per_parameter {
                Some(factor) => AiccThreshold::PerParameter(factor),
                None => AiccThreshold::Fixed(args.aicc_threshold),
            };
            let result = select_order_with(
                &events,
                &args.orders,
                args.criterion,
                &args.settings.options(),
                threshold,
            )?;
            print_json(&result)
        }
        Command::Intensity(args) => {
            let model = read_model(&args.model)?;
            let rows = mean_intensity_table(&model, args.t_max, args.n_points, args.method)?;
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            writeln!(out, "t,phi,expected_count")?;
            for r in rows {
                writeln!(out, "{},{},{}", r.t, r.phi, r.expected_count)?;
            }
            Ok(())
        }
        Command::Experiment(args) => experiment(args),
    }
}

fn simulate(args: SimulateArgs) -> hawkesp::Result<()> {
    let model = read_model(&args.model)?;
    let events = match (args.horizon, args.count) {
        (Some(t), _) => simulate_horizon(&model, t, args.seed)?,
        (None, Some(n)) => simulate_count(&model, n, args.seed)?,
        (None, None) => unreachable!("clap requires one of --horizon/--count"),
    };
    match args.out {
        Some(path) => {
            write_events(&events, &path)?;
            eprintln!("{} events on [0, {}] -> {}", events.len(), events.horizon(), path.display());
            Ok(())
        }
        None => write_event_times(&events, std::io::stdout().lock()),
    }
}

fn experiment(args: ExperimentArgs) -> hawkesp::Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(n) = args.scale {
        config = config.scaled(n)?;
    }
    let out = args
        .out
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| HawkesError::Config("no output directory: pass --out".into()))?;
    let report = run_experiment(&config)?;
    let files = write_report(&report, &out)?;
    for f in &files {
        println!("{}", Path::new(&out).join(f).display());
    }
    if !report.valid {
        eprintln!("warning: more than 20% of replications failed in at least one cell");
    }
    Ok(())
}

fn load_events(args: &EventsArgs) -> hawkesp::Result<hawkesp::EventSequence> {
    read_events(&args.events, args.horizon)
}

fn print_json<T: serde::Serialize>(value: &T) -> hawkesp::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}
