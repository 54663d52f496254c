use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tflab::config::ExperimentConfig;
use tflab::ensemble::{with_threads, Execution};
use tflab::experiments::{dispatch, Command, Setup};
use tflab::report::fmt_f64;
use tflab::Result;

#[derive(Parser, Debug)]
#[command(name = "tflab", version, about = "Stationary statistics of stochastically forced hyperviscous flows")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML experiment configuration; defaults are used for missing keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the configured seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", env = "TFLAB_OUT")]
    out: Option<PathBuf>,

    /// Worker threads (wall time only; results do not depend on it).
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Deterministic invariant suite.
    Verify,
    /// Stationary runs and statistical checks at every viscosity.
    Simulate,
    /// Viscosity sweep table.
    Sweep,
    /// Growth of Sobolev norms from stationary initial data.
    Growth,
    /// Exit fractions of the Bourgain good sets.
    Bourgain,
    /// 3D collapse probe over viscosities and Galerkin radii.
    Probe3d,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Verify => Command::Verify,
            Cmd::Simulate => Command::Simulate,
            Cmd::Sweep => Command::Sweep,
            Cmd::Growth => Command::Growth,
            Cmd::Bourgain => Command::Bourgain,
            Cmd::Probe3d => Command::Probe3d,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("tflab-out"));
    let setup = Setup::new(cfg, Execution::Parallel)?;
    let cmd = Command::from(cli.command);
    let checks = with_threads(cli.threads, || dispatch(cmd, &setup, &out))?;
    for c in &checks {
        println!(
            "{:<48} {:>24} ± {:<24} target {:<24} {}",
            c.quantity,
            fmt_f64(c.estimate),
            fmt_f64(c.ci_half_width),
            fmt_f64(c.target),
            c.verdict.as_str()
        );
    }
    println!("outputs in {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tflab: {e}");
            ExitCode::FAILURE
        }
    }
}
