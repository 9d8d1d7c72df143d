use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dots_core::agent::AgentConfig;
use dots_core::env::Scenario;
use dots_core::harness::{run_experiment, BaselineKind, ExperimentSpec, Mode};
use dots_core::{Error, Result};

/// Delay-oriented UAV task scheduling experiments.
#[derive(Parser)]
#[command(name = "dots", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the risk-sensitive agent.
    Train(Common),
    /// Evaluate a trained checkpoint greedily.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a reference policy.
    Baseline {
        #[arg(value_enum)]
        kind: Baseline,
        #[command(flatten)]
        common: Common,
    },
    /// Check the tabular learners against exact value iteration.
    OracleCheck(Common),
    /// Exact sweep over the constraint weight.
    Sweep(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Rpc,
    Spc,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Agent hyper-parameter TOML file (full-scale defaults otherwise).
    #[arg(long)]
    agent: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Iterations (epochs) per episode.
    #[arg(long)]
    iterations: Option<usize>,
    /// Energy budget per epoch, J.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    replicas: usize,
    /// Flights to simulate when evaluating a policy.
    #[arg(long, default_value_t = 1000)]
    flights: usize,
}

fn load_agent(path: Option<&PathBuf>) -> Result<AgentConfig> {
    match path {
        None => Ok(AgentConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read agent config {}: {e}", p.display())))?;
            Ok(toml::from_str(&text)?)
        }
    }
}

fn build_spec(mode: Mode, c: &Common) -> Result<ExperimentSpec> {
    let scenario = Scenario::from_path(&c.scenario)?;
    let mut spec = ExperimentSpec::new(scenario, mode, &c.out);
    spec.agent = load_agent(c.agent.as_ref())?;
    spec.seed = c.seed;
    spec.episodes = c.episodes;
    spec.iterations = c.iterations;
    spec.epsilon = c.epsilon;
    spec.replicas = c.replicas;
    spec.eval_flights = c.flights;
    Ok(spec)
}

fn run(cli: Cli) -> Result<()> {
    let spec = match &cli.command {
        Command::Train(c) => build_spec(Mode::Train, c)?,
        Command::Evaluate { checkpoint, common } => build_spec(Mode::Evaluate { checkpoint: checkpoint.clone() }, common)?,
        Command::Baseline { kind, common } => {
            let kind = match kind {
                Baseline::Rpc => BaselineKind::Rpc,
                Baseline::Spc => BaselineKind::Spc,
            };
            build_spec(Mode::Baseline(kind), common)?
        }
        Command::OracleCheck(c) => build_spec(Mode::OracleCheck, c)?,
        Command::Sweep(c) => build_spec(Mode::Sweep, c)?,
    };
    let reports = run_experiment(&spec)?;
    for r in &reports {
        println!("{}", serde_json::to_string(r)?);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
