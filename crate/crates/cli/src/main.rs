//! `mcsloc`: dataset synthesis, training, MCS evaluation, map-based
//! localization and reporting.

mod commands;
mod config;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};
use mcsloc_core::mcs::McsTable;

#[derive(Parser)]
#[command(name = "mcsloc", version, about = "MCS detection and MCS-map indoor localization")]
struct Cli {
    /// Print the built-in default configuration as JSON and exit.
    #[arg(long)]
    print_default_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON); omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the signal, training and environment seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for generation and evaluation.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Workspace directory for all outputs.
    #[arg(long, default_value = "work")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize labelled recordings and their manifest.
    GenDataset {
        #[command(flatten)]
        common: Common,
    },
    /// Train the classifier on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory (default: <out>/<paths.dataset_dir>).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Checkpoint to write (default: <out>/<paths.checkpoint>).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Classify every validation window and emit the MCS confusion matrix.
    EvalMcs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Simulate the room, survey the MCS map and score localization.
    SimulateLocate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Summarize everything found in the workspace as markdown.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    if common.jobs == 0 {
        return Err(ConfigError("--jobs must be at least 1".into()).into());
    }
    Ok(cfg)
}

fn load_with_table(common: &Common) -> Result<(ExperimentConfig, McsTable)> {
    let cfg = load_config(common)?;
    let table = cfg.mcs_table()?;
    Ok((cfg, table))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenDataset { common } => {
            let (cfg, table) = load_with_table(&common)?;
            commands::gen::run(&cfg, &table, &common.out, common.jobs)?;
        }
        Command::Train { common, dataset, checkpoint } => {
            let cfg = load_config(&common)?;
            let dataset = dataset.unwrap_or_else(|| cfg.dataset_dir(&common.out));
            let ckpt = checkpoint.unwrap_or_else(|| cfg.checkpoint_path(&common.out));
            commands::train::run(&cfg, &common.out, &dataset, &ckpt, common.jobs)?;
        }
        Command::EvalMcs { common, dataset, checkpoint } => {
            let (cfg, table) = load_with_table(&common)?;
            let dataset = dataset.unwrap_or_else(|| cfg.dataset_dir(&common.out));
            let ckpt = checkpoint.unwrap_or_else(|| cfg.checkpoint_path(&common.out));
            commands::eval_mcs::run(&table, &common.out, &dataset, &ckpt, common.jobs)?;
        }
        Command::SimulateLocate { common, checkpoint } => {
            let (cfg, table) = load_with_table(&common)?;
            let ckpt = checkpoint.unwrap_or_else(|| cfg.checkpoint_path(&common.out));
            commands::locate::run(&cfg, &table, &common.out, &ckpt, common.jobs)?;
        }
        Command::Report { common } => {
            let cfg = load_config(&common)?;
            let gaps = commands::report::run(&cfg, &common.out)?;
            for g in &gaps {
                eprintln!("warning: missing {g}");
            }
            println!("{}", common.out.join(commands::report::REPORT).display());
        }
    }
    Ok(())
}

/// 2 config or validation, 3 data format, 4 numeric, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<mcsloc_core::Error>() {
            use mcsloc_core::Error::*;
            return match e {
                Validation(_) | Domain(_) | Shape(_) => 2,
                Format { .. } | Json { .. } => 3,
                Numeric(_) => 4,
                Io { .. } => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_default_config {
        println!("{}", ExperimentConfig::default().to_json());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(2);
    };
    match run(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
