//! `fakespan`: build corpora, train, score, evaluate, fuse and run ablations.
//!
//! Exit codes: 0 success, 2 usage, configuration or input error, 3 numerical
//! failure during training or scoring.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fakespan::Error;

#[derive(Debug, Parser)]
#[command(name = "fakespan", version, about = "Partially fake audio detection with fake-span discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a span-labelled corpus and its manifests.
    BuildCorpus {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (relative paths go under $FAKESPAN_RUN_ROOT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the manifest only, no audio.
        #[arg(long)]
        dry_run: bool,
    },
    /// Extract and cache feature matrices for every record of a manifest.
    Features {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model; writes best.ckpt, last.ckpt and train_log.jsonl.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        val_manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from last.ckpt in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Score a manifest with a checkpoint; writes scores.tsv and report.json.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the EER and its threshold for a score file.
    Eer {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Also write the evaluation report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fuse score files per utterance.
    Fuse {
        #[arg(long, num_args = 1.., required = true)]
        scores: Vec<PathBuf>,
        /// avg, wavg, min or max.
        #[arg(long, default_value = "avg")]
        method: String,
        /// Comma-separated weights for wavg.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        /// Keep only the k systems with the lowest validation EER.
        #[arg(long, requires_all = ["val_scores", "val_manifest"])]
        top_k: Option<usize>,
        /// Validation score files, aligned with --scores.
        #[arg(long, num_args = 1..)]
        val_scores: Option<Vec<PathBuf>>,
        #[arg(long)]
        val_manifest: Option<PathBuf>,
        /// Labels for the fused scores; adds report.json.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every cell of an ablation grid at toy scale.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Axis values, e.g. `window=384,512` or `attention=on,off`; repeatable.
        #[arg(long)]
        grid: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
