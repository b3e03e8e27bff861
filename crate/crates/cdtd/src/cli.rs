//! Command line.

use std::path::PathBuf;

use cdtd_core::copula::CopulaSpec;
use cdtd_core::trainer::{StepMetrics, TrainObserver};
use cdtd_core::SampleConfig;
use clap::{Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::io::{load_csv, load_schema, read_json, write_csv, write_json};
use crate::pipeline::{self, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "cdtd", version, about = "Diffusion models for mixed-type tabular data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a CSV file.
    Train {
        /// Training configuration (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic rows from a checkpoint.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a synthetic table with real data.
    Eval {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        fake: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Training rows, enabling DCR and the efficiency check.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a table from a Gaussian copula spec.
    MakeSynthetic {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Writes progress lines to stderr.
struct Progress;

impl TrainObserver for Progress {
    fn on_step(&mut self, m: &StepMetrics) {
        eprintln!("{m}");
    }

    fn on_validation(&mut self, step: u64, loss: f64) {
        eprintln!("step={step} valid_loss={loss:.6}");
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, data, schema, out } => {
            let schema = load_schema(&schema)?;
            let config: RunConfig = match config {
                Some(p) => read_json(&p, "config")?,
                None => RunConfig::default(),
            };
            let data = load_csv(&data, &schema, "data")?;
            if data.dropped > 0 {
                eprintln!("dropped {} rows with missing values", data.dropped);
            }
            let ckpt = pipeline::train_model(&config, &schema, &data, &mut Progress)?;
            ckpt.save(&out)
        }
        Command::Sample { model, n, steps, seed, out } => {
            if n == 0 {
                return Err(Error::Usage("--n must be at least 1".into()));
            }
            if steps == 0 {
                return Err(Error::Usage("--steps must be at least 1".into()));
            }
            let ckpt = Checkpoint::load(&model)?;
            let cfg = SampleConfig { steps, ..SampleConfig::new(n, seed) };
            let table = pipeline::generate(&ckpt, &cfg, pipeline::thread_count())?;
            write_csv(&out, &table)
        }
        Command::Eval { real, fake, schema, train, out } => {
            let schema = load_schema(&schema)?;
            let real = load_csv(&real, &schema, "real data")?;
            let fake = load_csv(&fake, &schema, "synthetic data")?;
            let train = train.map(|p| load_csv(&p, &schema, "training data")).transpose()?;
            let report = pipeline::eval_tables(&schema, &real.table, &fake.table, train.as_ref().map(|t| &t.table))?;
            write_json(&out, &report)
        }
        Command::MakeSynthetic { spec, n, seed, out } => {
            let spec: CopulaSpec = read_json(&spec, "spec")?;
            let table = pipeline::make_synthetic(&spec, n, seed)?;
            write_csv(&out, &table)
        }
    }
}
