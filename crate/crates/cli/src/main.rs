//! `drunet`: preprocess volumes, train, predict and evaluate.

mod commands;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use failure::Failure;

#[derive(Parser, Debug)]
#[command(
    name = "drunet",
    version,
    about = "DR-Unet104 brain tumour segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct Repro {
    /// Seed for every random stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sequential, bit-reproducible execution. Execution is always
    /// sequential; the flag is recorded in the manifest.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Standardize raw volumes and write per-slice PNGs.
    Preprocess {
        /// Raw volumes, `<root>/<subject>/<subject>_<modality>.vol`.
        #[arg(long)]
        data_root: PathBuf,
        /// Output root for `<subject>/` slice directories.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        repro: Repro,
    },
    /// Train on labelled slices.
    Train(commands::train::TrainArgs),
    /// Segment every subject under the slice root.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Slice root as written by `preprocess`.
        #[arg(long)]
        data_root: PathBuf,
        /// Output root for `<subject>/<subject>_seg.vol`.
        #[arg(long)]
        out: PathBuf,
        /// Slices per forward pass.
        #[arg(long, default_value_t = 10)]
        batch: usize,
        #[command(flatten)]
        repro: Repro,
    },
    /// Compare predicted label volumes with ground truth.
    Evaluate {
        /// Prediction root, `<root>/<subject>/<subject>_seg.vol`.
        #[arg(long, alias = "data-root")]
        pred: PathBuf,
        /// Ground-truth root with the same layout.
        #[arg(long)]
        truth: PathBuf,
        /// Report CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Preprocess {
            data_root,
            out,
            repro,
        } => commands::preprocess::run(&data_root, &out, &repro),
        Command::Train(args) => commands::train::run(&args),
        Command::Predict {
            checkpoint,
            data_root,
            out,
            batch,
            repro,
        } => commands::predict::run(&checkpoint, &data_root, &out, batch, &repro),
        Command::Evaluate { pred, truth, out } => commands::evaluate::run(&pred, &truth, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Failure::USER)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
