//! `holoworld` command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use super::config::{Experiment, ExperimentConfig};
use super::experiments::run;
use super::metrics::RunMetrics;
use super::model::ModelKind;
use crate::error::{HoloError, Result};

#[derive(Debug, Parser)]
#[command(name = "holoworld", version, about = "Phase-vector world models on a GridWorld")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiments listed in the config file.
    Run(Common),
    /// Train the configured models and write checkpoints.
    Train(Common),
    /// 1-step accuracy and similarity on all and held-out transitions.
    Eval(Common),
    /// Multi-step rollout accuracy with and without cleanup.
    Rollout(Common),
    /// Horizon accuracy against the zero-shot ratio.
    SweepZeroshot(Common),
    /// 1-step accuracy under latent noise.
    SweepNoise(Common),
    /// Similarity-kernel profiles of trained FHRR state embeddings.
    Kernel(Common),
    /// State embeddings as CSV.
    Export(Common),
    /// Inference timing and parameter counts.
    Bench(Common),
    /// Training, 1-step and rollout metrics over every configured seed.
    ReproTable1(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key-value config file; omitted keys keep their defaults.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Comma-separated model kinds.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
}

impl Common {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(m) = &self.models {
            cfg.models = m.clone();
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Command {
    fn parts(&self) -> (&Common, Option<Experiment>) {
        match self {
            Command::Run(c) => (c, None),
            Command::Train(c) => (c, Some(Experiment::Train)),
            Command::Eval(c) => (c, Some(Experiment::Eval)),
            Command::Rollout(c) => (c, Some(Experiment::Rollout)),
            Command::SweepZeroshot(c) => (c, Some(Experiment::Zeroshot)),
            Command::SweepNoise(c) => (c, Some(Experiment::Noise)),
            Command::Kernel(c) => (c, Some(Experiment::Kernel)),
            Command::Export(c) => (c, Some(Experiment::Export)),
            Command::Bench(c) => (c, Some(Experiment::Bench)),
            Command::ReproTable1(c) => (c, Some(Experiment::Table1)),
        }
    }
}

pub fn print_summary(metrics: &RunMetrics) {
    for (exp, models) in &metrics.experiments {
        println!("[{exp}]");
        for (model, table) in models {
            for metric in table.metrics() {
                let seeds: Vec<String> = table
                    .per_seed(metric)
                    .into_iter()
                    .flatten()
                    .map(|(s, v)| format!("{s}:{v:.2}"))
                    .collect();
                let mean = table.mean(metric).unwrap_or(f64::NAN);
                println!("  {model:<6} {metric:<24} mean {mean:>9.3}   ({})", seeds.join(" "));
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let (common, exp) = cli.command.parts();
    let mut cfg = common.resolve()?;
    if let Some(e) = exp {
        cfg.experiments = vec![e];
    }
    let metrics = run(&cfg)?;
    print_summary(&metrics);
    println!("artifacts written to {}", cfg.output_dir.display());
    Ok(())
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ HoloError::Config { .. }) => {
            eprintln!("holoworld: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("holoworld: {e}");
            ExitCode::FAILURE
        }
    }
}
