use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use latbeam::experiment::{
    fig1_demo, oracle_check, run_search, run_training, stats_sweep, sweep_csv, ExperimentConfig,
};
use latbeam::lattice::serialize;
use latbeam::parallel::with_threads;

#[derive(Parser)]
#[command(
    name = "latbeam",
    version,
    about = "Beam search with approximative recombination: sweeps, checks and toy training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat TOML experiment config; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Lattice statistics per (k, b), averaged over seeded instances (CSV).
    StatsSweep,
    /// Search one instance; prints a JSON report, `--out` receives the lattice.
    Search,
    /// ML pretraining and sequence training on the teacher task (CSV per epoch).
    Train,
    /// Run the oracle equivalence suite (JSON); exits with 1 on any failure.
    OracleCheck,
    /// Build the small demo lattice and list its paths; `--out` receives the lattice.
    Fig1Demo,
}

enum Failure {
    Check(anyhow::Error),
    Config(anyhow::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<latbeam::Error>() {
            Some(latbeam::Error::InvalidConfig(_)) => Failure::Config(e),
            _ => Failure::Other(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(e)) => {
            eprintln!("check failed: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::Config)?;
            ExperimentConfig::from_toml(&text)
                .with_context(|| format!("in {}", path.display()))
                .map_err(Failure::Config)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| Failure::Config(e.into()))?;
    Ok(cfg)
}

fn write_output(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let out = cli.out.clone().or_else(|| cfg.output.clone().map(PathBuf::from));
    let threads = cli.threads.unwrap_or(0);
    let command = cli.command;
    with_threads(threads, || execute(command, &cfg, out.as_deref()))
        .map_err(|e| Failure::from(anyhow::Error::from(e)))?
}

fn execute(command: Command, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(), Failure> {
    match command {
        Command::StatsSweep => {
            let rows = stats_sweep(cfg).context("stats sweep")?;
            write_output(out, &sweep_csv(&rows))?;
        }
        Command::Search => {
            let (result, report) = run_search(cfg).context("search")?;
            println!("{}", serde_json::to_string_pretty(&report).context("encoding report")?);
            if let Some(p) = out {
                std::fs::write(p, serialize(&result.lattice)).with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Train => {
            let run = run_training(cfg).context("training")?;
            if let (Some(first), Some(last)) = (run.pretrain_loglik.first(), run.pretrain_loglik.last()) {
                eprintln!("pretraining mean log-likelihood {first:.6} -> {last:.6}");
            }
            write_output(out, &run.log.to_csv())?;
        }
        Command::OracleCheck => {
            let report = oracle_check(cfg).context("oracle check")?;
            let json = serde_json::to_string_pretty(&report).context("encoding report")?;
            write_output(out, &format!("{json}\n"))?;
            if !report.passed {
                let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                return Err(Failure::Check(anyhow::anyhow!("{}", failed.join(", "))));
            }
        }
        Command::Fig1Demo => {
            let demo = fig1_demo().context("demo lattice")?;
            print!("{}", demo.render());
            if let Some(p) = out {
                std::fs::write(p, &demo.lattice_text).with_context(|| format!("writing {}", p.display()))?;
            }
        }
    }
    Ok(())
}
