//! `ecgviz`: synthesize or ingest ECG data, train the classifier and the
//! visualization networks, evaluate, and export saliency overlays.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ecgviz_core::cli::{self, commands, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "ecgviz",
    version,
    about = "ECG arrhythmia classification with CAM and deletion-mask saliency"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration file (flat key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker pool size (0 = one worker per core).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Clone)]
struct SaliencyArgs {
    /// Restrict to one rhythm class (N, PVC, PAC, AFIB, SVTA, SBR, LBBB, RBBB).
    #[arg(long)]
    class: Option<String>,
    /// Windows exported per class.
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground-truth anomaly spans.
    Synth(Common),
    /// Convert a PhysioNet-style directory into the CSV dataset layout.
    Ingest(Common),
    /// Train the configured network on the balanced split.
    Train(Common),
    /// Evaluate a checkpoint on the held-out split.
    Eval(Common),
    /// Export class activation map overlays for top test windows.
    Cam {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        saliency: SaliencyArgs,
    },
    /// Learn deletion masks for top test windows and export overlays.
    Mask {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        saliency: SaliencyArgs,
        /// Mask objective convention.
        #[arg(long, value_parser = ["deletion", "literal"])]
        convention: Option<String>,
    },
}

fn overrides(
    common: &Common,
    saliency: Option<&SaliencyArgs>,
    convention: Option<String>,
) -> Overrides {
    Overrides {
        seed: common.seed,
        out: common.out.clone(),
        class: saliency.and_then(|s| s.class.clone()),
        top_k: saliency.and_then(|s| s.top_k),
        convention,
        workers: common.workers,
    }
}

fn run() -> ecgviz_core::Result<i32> {
    let cli = Cli::parse();
    let (common, over) = match &cli.command {
        Command::Synth(c) | Command::Ingest(c) | Command::Train(c) | Command::Eval(c) => {
            (c.clone(), overrides(c, None, None))
        }
        Command::Cam { common, saliency } => {
            (common.clone(), overrides(common, Some(saliency), None))
        }
        Command::Mask {
            common,
            saliency,
            convention,
        } => (
            common.clone(),
            overrides(common, Some(saliency), convention.clone()),
        ),
    };
    let config = ExperimentConfig::load(&common.config, &over)?;
    match cli.command {
        Command::Synth(_) => {
            commands::cmd_synth(&config)?;
        }
        Command::Ingest(_) => {
            commands::cmd_ingest(&config)?;
        }
        Command::Train(_) => {
            commands::cmd_train(&config)?;
        }
        Command::Eval(_) => {
            let (_, partial) = commands::cmd_eval(&config)?;
            if partial {
                eprintln!("eval: partial result (undefined class metrics)");
                return Ok(cli::EXIT_PARTIAL_RESULT);
            }
        }
        Command::Cam { .. } => {
            commands::cmd_cam(&config)?;
        }
        Command::Mask { .. } => {
            commands::cmd_mask(&config)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(cli::exit_code_for(&err) as u8)
        }
    }
}
