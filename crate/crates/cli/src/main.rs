mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use l2c_core::synthetic::{synthetic_dataset, synthetic_schema};
use l2c_core::tabular::{load_csv, split, DatasetSchema};

use config::{ExperimentConfig, Overrides};
use pipeline::Pipeline;

#[derive(Parser)]
#[command(
    name = "l2c",
    version,
    about = "Amortized counterfactual explanations for tabular classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the seeded synthetic benchmark and its schema
    Synth {
        #[arg(long, default_value_t = 500)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shuffle a CSV into train/val/test (or train/test) files
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Comma-separated part sizes; the last part takes the remainder
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit bucket edges for the continuous features
    Discretize(Overrides),
    /// Train the classifier to be explained
    TrainBlackbox(Overrides),
    /// Train the generator and selector
    TrainL2c(Overrides),
    /// Sample counterfactual sets for every input row
    Generate {
        #[command(flatten)]
        o: Overrides,
        /// Rows to explain; defaults to the configured test set
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Desiderata report over saved counterfactual sets
    Evaluate {
        #[command(flatten)]
        o: Overrides,
        /// Evaluate this directory instead of each seed's output
        #[arg(long)]
        counterfactuals: Option<PathBuf>,
    },
    /// Linkage-risk report over released counterfactuals
    PrivacyAudit {
        #[command(flatten)]
        o: Overrides,
        #[arg(long)]
        attack: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// All stages in order
    Run(Overrides),
}

fn pipeline(o: &Overrides) -> Result<Pipeline> {
    Pipeline::new(ExperimentConfig::load(o)?)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { rows, seed, out } => {
            std::fs::create_dir_all(&out)
                .with_context(|| format!("cannot create {}", out.display()))?;
            let data = synthetic_dataset(rows, seed)?;
            data.write_csv(out.join("synthetic.csv"))?;
            std::fs::write(
                out.join("synthetic.schema.json"),
                synthetic_schema().to_json() + "\n",
            )?;
            println!("wrote {rows} rows to {}", out.display());
        }
        Command::Split {
            data,
            schema,
            sizes,
            seed,
            out,
        } => {
            let names: &[&str] = match sizes.len() {
                2 => &["train", "test"],
                3 => &["train", "val", "test"],
                n => bail!("--sizes takes 2 or 3 parts, got {n}"),
            };
            let schema = DatasetSchema::load(&schema)?;
            let data = load_csv(&data, &schema)?;
            std::fs::create_dir_all(&out)
                .with_context(|| format!("cannot create {}", out.display()))?;
            for (part, name) in split(&data, &sizes, seed).iter().zip(names) {
                part.write_csv(out.join(format!("{name}.csv")))?;
                println!("{name}: {} rows", part.len());
            }
        }
        Command::Discretize(o) => pipeline(&o)?.discretize()?,
        Command::TrainBlackbox(o) => pipeline(&o)?.train_blackbox()?,
        Command::TrainL2c(o) => pipeline(&o)?.train_l2c()?,
        Command::Generate { o, input } => pipeline(&o)?.generate(input.as_deref())?,
        Command::Evaluate { o, counterfactuals } => {
            pipeline(&o)?.evaluate(counterfactuals.as_deref())?
        }
        Command::PrivacyAudit { o, attack, k } => {
            pipeline(&o)?.privacy_audit(attack.as_deref(), k)?
        }
        Command::Run(o) => pipeline(&o)?.run()?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
