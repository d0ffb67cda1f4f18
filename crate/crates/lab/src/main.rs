use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nuce_lab::commands::{
    self, AnchorChoice, DetectOptions, GradcheckOptions, PcaOptions, RunOptions,
};
use nuce_lab::error::exit;

/// Uncertainty-weighted contrastive training experiments.
#[derive(Parser)]
#[command(name = "nuce-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

impl RunArgs {
    fn options(self) -> RunOptions {
        RunOptions {
            config: self.config,
            seed: self.seed,
            out: self.out,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AnchorArg {
    Centroids,
    Model,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validate the configured loss over seeds × folds.
    Train(RunArgs),
    /// Cross-entropy vs uncertainty weighting vs full NUCE.
    Ablation(RunArgs),
    /// Grid over lambda_r, lambda_c and gamma.
    Sweep(RunArgs),
    /// Write the synthetic dataset of the first seed as CSV.
    Generate(RunArgs),
    /// Finite-difference check of every analytic loss gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        instances: usize,
        /// Corrupt one gradient block (`<loss>:<H|W|A>`) to exercise the failure path.
        #[arg(long, hide = true)]
        perturb: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detection mAP suite from a JSON-lines file.
    DetectEval {
        #[arg(long)]
        input: PathBuf,
        /// Extra IoU thresholds, comma separated.
        #[arg(long, value_delimiter = ',')]
        iou: Vec<f64>,
        /// Gate thresholds, comma separated; reports forwarded image counts.
        #[arg(long, value_delimiter = ',')]
        tau: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project a dataset through a trained model and summarize its clusters.
    Pca {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "centroids")]
        anchors: AnchorArg,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::INPUT as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(&a.options()),
        Command::Ablation(a) => commands::ablation(&a.options()),
        Command::Sweep(a) => commands::sweep(&a.options()),
        Command::Generate(a) => commands::generate(&a.options()),
        Command::Gradcheck {
            seed,
            instances,
            perturb,
            out,
        } => commands::gradcheck(&GradcheckOptions {
            seed,
            instances,
            perturb,
            out,
        }),
        Command::DetectEval {
            input,
            iou,
            tau,
            out,
        } => commands::detect_eval(&DetectOptions {
            input,
            iou,
            tau,
            out,
        }),
        Command::Pca {
            model,
            data,
            anchors,
            out,
        } => commands::pca(&PcaOptions {
            model,
            data,
            anchors: match anchors {
                AnchorArg::Centroids => AnchorChoice::Centroids,
                AnchorArg::Model => AnchorChoice::Model,
            },
            out,
        })
        .map(|(text, _)| text),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
