//! Command-line front end: runs experiments, tunes the age-compensation
//! weight, fits model parameters to recorded traces, and prints policy
//! comparisons.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for
//! runtime failures.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use fugrant::config::OutputFormat;
use fugrant::estimation::{em_iterate, EstimatedParams, ObservationTrace};
use fugrant::harness::run_experiment;
use fugrant::inference::Observation;
use fugrant::model::ModelParams;
use fugrant::report::{compare_report, emit_series};
use fugrant::rng::{subseed, RngStream};
use fugrant::tuning::{achievable_region, optimize_beta, BetaSearchConfig};
use fugrant::{ActivationVector, BetaSetting, Error, ExperimentConfig, PolicyKind};

#[derive(Parser)]
#[command(
    name = "fugrant",
    version,
    about = "Simulator for predictive fast-uplink grant allocation",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write per-policy series files.
    Simulate(SimulateArgs),
    /// Search for the age weight minimizing average regret times average age.
    TuneBeta(TuneBetaArgs),
    /// Fit event and activation parameters to a recorded activation trace.
    Estimate(EstimateArgs),
    /// Run the experiment and print a cross-policy summary table.
    Compare(CompareArgs),
}

/// Options shared by `simulate` and `compare`.
#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override seeds: comma-separated values and inclusive `a..b` ranges.
    #[arg(long, value_name = "LIST")]
    seeds: Option<String>,
    /// Override the policy list (comma-separated policy names).
    #[arg(long, value_name = "LIST")]
    policies: Option<String>,
    /// Override the age weight: a nonnegative number, or `optimize`.
    #[arg(long, value_name = "BETA")]
    beta: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory (overrides the config's `out_dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Output format for the series files.
    #[arg(long, value_name = "csv|json")]
    format: Option<String>,
}

#[derive(Args)]
struct TuneBetaArgs {
    /// Experiment configuration supplying dimensions and, when explicit,
    /// the model parameters. Defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for the parameter draw and the shared tuning trajectories.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Policy the weight is tuned for.
    #[arg(long, value_name = "POLICY")]
    policy: Option<String>,
    /// Slots per tuning replication (defaults to the config horizon).
    #[arg(long, value_name = "T")]
    horizon: Option<usize>,
    /// Trajectories averaged per candidate.
    #[arg(long, value_name = "R")]
    replications: Option<usize>,
    /// Upper end of the candidate grid.
    #[arg(long, value_name = "B")]
    beta_max: Option<f64>,
    /// Number of log-spaced positive candidates.
    #[arg(long, value_name = "P")]
    grid_points: Option<usize>,
    /// Also write the full candidate grid as CSV to this file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Recorded activation trace (JSON; see README for the schema).
    #[arg(long, value_name = "PATH")]
    trace: PathBuf,
    /// Number of hidden events to fit.
    #[arg(long, value_name = "N")]
    n_events: usize,
    /// Iteration cap for the fit.
    #[arg(long, default_value_t = 40, value_name = "Z")]
    max_iters: usize,
    /// Seed for the random initialization and restarts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the fitted parameters here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also write the summary table as CSV to this file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// CLI-level error with the exit code baked in.
enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn config(message: impl fmt::Display) -> Self {
        CliError::Config(message.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::ConfigParse(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::TuneBeta(args) => tune_beta(args),
        Command::Estimate(args) => estimate(args),
        Command::Compare(args) => compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Parses `1,2,10..12` into `[1, 2, 10, 11, 12]`.
fn parse_seeds(list: &str) -> Result<Vec<u64>, CliError> {
    let mut seeds = Vec::new();
    for part in list.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(CliError::config("seeds: empty entry in list"));
        }
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u64 = lo
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("seeds: bad range start in `{part}`")))?;
            let hi: u64 = hi
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("seeds: bad range end in `{part}`")))?;
            if hi < lo {
                return Err(CliError::config(format!(
                    "seeds: range `{part}` runs backwards"
                )));
            }
            seeds.extend(lo..=hi);
        } else {
            seeds.push(
                part.parse()
                    .map_err(|_| CliError::config(format!("seeds: `{part}` is not a number")))?,
            );
        }
    }
    Ok(seeds)
}

fn parse_policies(list: &str) -> Result<Vec<PolicyKind>, CliError> {
    list.split(',')
        .map(|p| PolicyKind::from_str(p.trim()).map_err(CliError::from))
        .collect()
}

fn parse_beta(raw: &str) -> Result<BetaSetting, CliError> {
    let setting = if raw.trim() == "optimize" {
        BetaSetting::Keyword("optimize".to_string())
    } else {
        let v: f64 = raw.trim().parse().map_err(|_| {
            CliError::config(format!("beta: `{raw}` is neither a number nor `optimize`"))
        })?;
        BetaSetting::Value(v)
    };
    setting.validate().map_err(CliError::from)?;
    Ok(setting)
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => ExperimentConfig::load(p).map_err(CliError::config),
    }
}

fn apply_run_overrides(config: &mut ExperimentConfig, args: &RunArgs) -> Result<(), CliError> {
    if let Some(list) = &args.seeds {
        config.seeds = parse_seeds(list)?;
    }
    if let Some(list) = &args.policies {
        config.policies = parse_policies(list)?;
    }
    if let Some(raw) = &args.beta {
        config.beta = parse_beta(raw)?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut config = load_config(&args.run.config)?;
    apply_run_overrides(&mut config, &args.run)?;
    if let Some(raw) = &args.format {
        config.format = OutputFormat::from_str(raw).map_err(CliError::from)?;
    }
    config.validate().map_err(CliError::from)?;
    // Where the files land is placement, not experiment identity: the
    // config echo in the manifest stays independent of `--out`, so the
    // same experiment written to two directories yields identical bytes.
    let out_dir = args
        .out
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    let started = Instant::now();
    let result = run_experiment(&config)?;
    if result.beta_warning {
        eprintln!(
            "warning: cost profile showed no interior minimum on the search grid; \
             using the grid minimum beta = {}",
            result.beta
        );
    }
    let files = emit_series(&result, &out_dir)?;
    println!("beta: {}", result.beta);
    for f in &files {
        println!("wrote {}", f.display());
    }
    eprintln!(
        "{} seeds x {} policies in {:.2}s",
        config.seeds.len(),
        config.policies.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

/// Draws the model parameters the same way the experiment runner does:
/// explicit arrays when the config carries them, otherwise a seeded draw.
fn params_from_config(config: &ExperimentConfig, seed: u64) -> Result<ModelParams, CliError> {
    if let Some(p) = config.explicit_params()? {
        return Ok(p);
    }
    let mut rng = RngStream::new(subseed(seed, "params", 0));
    ModelParams::sample(config.n_events, config.n_devices, config.n_slots, &mut rng)
        .map_err(CliError::from)
}

fn tune_beta(args: TuneBetaArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    config.validate().map_err(CliError::from)?;
    let params = params_from_config(&config, args.seed)?;

    let mut search = BetaSearchConfig::new(subseed(args.seed, "beta-search", 0));
    search.horizon = args.horizon.unwrap_or(config.horizon);
    search.steady_aggregate = config.steady_aggregate;
    if let Some(r) = args.replications {
        search.replications = r;
    }
    if let Some(b) = args.beta_max {
        search.beta_max = b;
    }
    if let Some(p) = args.grid_points {
        search.grid_points = p;
    }
    if let Some(raw) = &args.policy {
        search.policy = PolicyKind::from_str(raw).map_err(CliError::from)?;
    }
    search.validate().map_err(CliError::from)?;

    let optimum = optimize_beta(&search, &params)?;
    if !optimum.unimodal {
        eprintln!("warning: no interior minimum bracketed; reporting the grid minimum");
    }
    let mut body =
        serde_json::to_string_pretty(&optimum).map_err(|e| CliError::Runtime(e.to_string()))?;
    body.push('\n');
    print!("{body}");

    if let Some(path) = args.out {
        let region = achievable_region(&search, &params)?;
        let mut csv = String::from("beta,avg_regret,avg_aoi,cost\n");
        for e in &region {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                e.beta, e.avg_regret, e.avg_aoi, e.cost
            ));
        }
        write_output(&path, &csv)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

/// Input schema for `estimate`: one entry per slot; `active` is the
/// realized activation of every device, `observed` (optional) masks which
/// devices were actually watched that slot.
#[derive(Deserialize)]
struct TraceFile {
    slots: Vec<TraceSlot>,
}

#[derive(Deserialize)]
struct TraceSlot {
    active: Vec<bool>,
    #[serde(default)]
    observed: Option<Vec<bool>>,
}

fn load_trace(path: &Path) -> Result<ObservationTrace, CliError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("trace `{}`: {e}", path.display())))?;
    let file: TraceFile = serde_json::from_str(&raw)
        .map_err(|e| CliError::config(format!("trace `{}`: {e}", path.display())))?;
    if file.slots.is_empty() {
        return Err(CliError::config("trace: no slots recorded"));
    }
    let n_devices = file.slots[0].active.len();
    let mut trace = ObservationTrace::empty(n_devices);
    for (i, slot) in file.slots.into_iter().enumerate() {
        let activations = ActivationVector::new(slot.active);
        let obs = match slot.observed {
            None => Observation::Full(activations),
            Some(observed) => {
                if observed.len() != activations.len() {
                    return Err(CliError::config(format!(
                        "trace slot {i}: `observed` has {} entries, `active` has {}",
                        observed.len(),
                        activations.len()
                    )));
                }
                Observation::Scheduled {
                    activations,
                    observed,
                }
            }
        };
        trace
            .push(obs)
            .map_err(|e| CliError::config(format!("trace slot {i}: {e}")))?;
    }
    Ok(trace)
}

fn estimate(args: EstimateArgs) -> Result<(), CliError> {
    if args.n_events == 0 {
        return Err(CliError::config("n-events: must be at least 1"));
    }
    if args.max_iters == 0 {
        return Err(CliError::config("max-iters: must be at least 1"));
    }
    let trace = load_trace(&args.trace)?;
    let mut init_rng = RngStream::new(subseed(args.seed, "em-init", 0));
    let init = EstimatedParams::random_init(args.n_events, trace.n_devices(), &mut init_rng);
    let fitted = em_iterate(&trace, init, args.max_iters, subseed(args.seed, "em", 0))?;
    let mut body =
        serde_json::to_string_pretty(&fitted).map_err(|e| CliError::Runtime(e.to_string()))?;
    body.push('\n');
    match args.out {
        None => print!("{body}"),
        Some(path) => {
            write_output(&path, &body)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), CliError> {
    let mut config = load_config(&args.run.config)?;
    apply_run_overrides(&mut config, &args.run)?;
    config.validate().map_err(CliError::from)?;
    let result = run_experiment(&config)?;
    let report = compare_report(&result)?;
    print!("{}", report.to_text());
    if let Some(path) = args.out {
        write_output(&path, &report.to_csv())?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("writing `{}`: {e}", path.display())))
}
