mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] wdrc::WdrcError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn schema(field: &str, detail: impl std::fmt::Display) -> Self {
        CliError::Schema(format!("field `{field}`: {detail}"))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_assumption_violation() => 2,
            CliError::Core(e) if e.is_non_convergence() => 3,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "wdrc", version, about = "Wasserstein distributionally robust control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize the controller and write solution.json.
    Design(Common),
    /// Design, then Monte Carlo the WDRC controller under the truth.
    Simulate(Common),
    /// Monte Carlo WDRC and LQG on identical seeds.
    Compare(Common),
    /// Out-of-sample cost over a grid of radii and sample sizes.
    SweepTheta(Common),
    /// rho(lambda) and the bound over the lambda grid.
    SweepLambda(Common),
    /// Pick lambda for the configured theta and write solution.json.
    Tune(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Switches to theta mode.
    #[arg(long, conflicts_with = "lambda")]
    theta: Option<f64>,
    /// Switches to fixed-lambda mode.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write zero wall times so outputs are byte-stable.
    #[arg(long)]
    no_timing: bool,
}

impl Common {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.simulation.seed = s;
        }
        if let Some(r) = self.runs {
            cfg.simulation.runs = r;
        }
        if let Some(h) = self.horizon {
            cfg.simulation.horizon = h;
        }
        if let Some(t) = self.theta {
            cfg.theta = Some(t);
            cfg.lambda = None;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = Some(l);
            cfg.theta = None;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
    }
}

fn thread_pool() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("WDRC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| CliError::Schema(format!("WDRC_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Schema(format!("cannot build thread pool: {e}")))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    thread_pool()?;
    let (mode, common) = match &cli.command {
        Command::Design(c) => (run::Mode::Design, c),
        Command::Simulate(c) => (run::Mode::Simulate, c),
        Command::Compare(c) => (run::Mode::Compare, c),
        Command::SweepTheta(c) => (run::Mode::SweepTheta, c),
        Command::SweepLambda(c) => (run::Mode::SweepLambda, c),
        Command::Tune(c) => (run::Mode::Tune, c),
    };
    let mut cfg = ExperimentConfig::load(&common.config)?;
    common.apply(&mut cfg);
    cfg.validate()?;
    run::run_experiment(&cfg, mode, common.no_timing)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
