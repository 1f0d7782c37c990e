use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use mafd_core::config::{ConfigFile, RunConfig};
use mafd_core::experiments::{self, ExperimentKind, ExperimentSpec};
use mafd_core::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

/// Movable-antenna full-duplex satellite power minimisation experiments.
#[derive(Parser)]
#[command(name = "ma-fd-power", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// PSO convergence traces per region size and seed.
    Convergence(ExperimentArgs),
    /// UL/DL power trade-off over the Tchebycheff weight grid.
    Tradeoff(ExperimentArgs),
    /// Total powers against the SI loss coefficient.
    SiSweep(ExperimentArgs),
    /// One MA run and the FPA baselines per seed.
    Single(ExperimentArgs),
    /// Generate a scenario file.
    Scenario(ScenarioArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML configuration; defaults to the desk preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seeds, e.g. `1-10` or `1,4,9`.
    #[arg(long, default_value = "1")]
    seeds: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Use the full-scale system preset.
    #[arg(long)]
    full_scale: bool,
    /// Re-solve every recorded layout and compare total powers.
    #[arg(long)]
    audit: bool,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; the file matches the scenario experiments use for this seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    full_scale: bool,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

fn load_config(path: Option<&PathBuf>, full_scale: bool) -> mafd_core::Result<RunConfig> {
    let file = match path {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    file.resolve(full_scale)
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::Parse { .. })
        || matches!(e, Error::Io { path, .. } if path.extension().is_some_and(|x| x == "toml"))
}

fn run_experiment(kind: ExperimentKind, args: ExperimentArgs) -> mafd_core::Result<u8> {
    let config = load_config(args.config.as_ref(), args.full_scale)?;
    let seeds = experiments::parse_seeds(&args.seeds)?;
    let spec = ExperimentSpec { kind, config, seeds, out_dir: args.out, audit: args.audit };
    let outcome = experiments::run_experiment(&spec)?;
    for f in &outcome.files {
        info!("wrote {}", f.display());
    }
    let optimal = outcome.rows.iter().filter(|r| r.is_optimal()).count();
    println!("{}: {optimal}/{} cells optimal, output in {}", kind.name(), outcome.rows.len(), spec.out_dir.display());
    if let Some(a) = &outcome.audit {
        println!("audit: {} rows re-solved, {} failures, max deviation {:e}", a.checked, a.failures, a.max_deviation);
        if a.failures > 0 {
            return Ok(EXIT_FAILURE);
        }
    }
    Ok(if outcome.any_optimal() { 0 } else { EXIT_INFEASIBLE })
}

fn run_scenario(args: ScenarioArgs) -> mafd_core::Result<u8> {
    let config = load_config(args.config.as_ref(), args.full_scale)?;
    experiments::instance(&config, args.seed)?.scenario.save(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Convergence(a) => run_experiment(ExperimentKind::Convergence, a),
        Command::Tradeoff(a) => run_experiment(ExperimentKind::Tradeoff, a),
        Command::SiSweep(a) => run_experiment(ExperimentKind::SiSweep, a),
        Command::Single(a) => run_experiment(ExperimentKind::Single, a),
        Command::Scenario(a) => run_scenario(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { EXIT_CONFIG } else { EXIT_FAILURE })
        }
    }
}
