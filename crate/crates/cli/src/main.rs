use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use semloop_cli::commands;
use semloop_cli::config::RunConfig;
use semloop_core::schema::TaskKind;

/// Semantic-bottleneck pipeline for behavioral time-series prediction:
/// synthetic data generation, toy GRPO training, and LOSO evaluation.
#[derive(Parser)]
#[command(name = "semloop", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Prediction target: anxiety or depression.
    #[arg(long, global = true)]
    task: Option<TaskKind>,

    /// Upper bound on internal parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic dataset as features.csv + labels.csv.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the toy policy; writes checkpoint.json and curve.csv.
    TrainToy {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run leave-one-subset-out evaluation for the selected predictors.
    RunLoso {
        /// Comma-separated: mean-baseline, linear-baseline, toy-checkpoint,
        /// toy-train, provider.
        #[arg(long, value_delimiter = ',', required = true)]
        predictor: Vec<String>,
        /// Trained checkpoint for the toy-checkpoint predictor.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Restrict evaluation to one held-out fold.
        #[arg(long)]
        fold: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the configured remote provider through the two-stage
    /// pipeline.
    EvalProvider {
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a saved report.json as a table.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().context("--config <path> is required for this command")?;
    let mut cfg = RunConfig::load(path)?;
    cfg.apply_overrides(cli.seed, cli.task);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenSynth { out } => {
            let cfg = load_config(&cli)?;
            commands::cmd_gen_synth(&cfg, out)?;
        }
        Command::TrainToy { out } => {
            let cfg = load_config(&cli)?;
            commands::cmd_train_toy(&cfg, out)?;
        }
        Command::RunLoso { predictor, checkpoint, fold, out } => {
            let cfg = load_config(&cli)?;
            commands::cmd_run_loso(
                &cfg,
                predictor,
                checkpoint.as_deref(),
                fold.as_deref(),
                out,
                cli.jobs,
            )?;
        }
        Command::EvalProvider { out } => {
            let cfg = load_config(&cli)?;
            commands::cmd_eval_provider(&cfg, out, cli.jobs)?;
        }
        Command::Report { input } => {
            commands::cmd_report(input)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
