use std::path::{Path, PathBuf};

use clap::Args;
use drunet_core::data::{list_subjects, read_subject_slices};
use drunet_core::model::{Checkpoint, DrUnet104};
use drunet_core::train::{loss_history_csv, LabeledSlice, TrainConfig, Trainer};
use serde::Serialize;

use super::{create_dir, display};
use crate::failure::{io, Failure};
use crate::manifest::{sha256_file, Manifest};
use crate::Repro;

const IN_CHANNELS: usize = 4;
const N_CLASS: usize = 4;

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// Slice root as written by `preprocess`.
    #[arg(long)]
    pub data_root: PathBuf,
    /// Checkpoint file to write.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory for the loss history and manifest; defaults to the
    /// checkpoint's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    /// Disable random flips.
    #[arg(long)]
    pub no_augment: bool,
    /// Divide every channel width by this (1 = published network).
    #[arg(long, default_value_t = 1)]
    pub width_divisor: usize,
    /// Also write `<checkpoint>.epoch<N>` every N epochs.
    #[arg(long)]
    pub save_every: Option<usize>,
    #[command(flatten)]
    pub repro: Repro,
}

#[derive(Serialize)]
struct Config<'a> {
    args: &'a TrainArgs,
    slices: usize,
    subjects: Vec<String>,
    parameter_count: usize,
    final_loss: f64,
    checkpoint_sha256: String,
}

fn load_labelled(root: &Path) -> Result<(Vec<LabeledSlice<f32>>, Vec<String>), Failure> {
    let mut data = Vec::new();
    let mut used = Vec::new();
    for subject in list_subjects(root)? {
        let slices = read_subject_slices(&root.join(&subject), &subject)?;
        let before = data.len();
        for s in &slices {
            if s.label.is_some() {
                data.push(LabeledSlice::from_sample(s)?);
            }
        }
        if data.len() > before {
            used.push(subject);
        } else if !slices.is_empty() {
            log::warn!("{subject}: no label masks, not used for training");
        }
    }
    Ok((data, used))
}

pub fn run(args: &TrainArgs) -> Result<(), Failure> {
    if !args.data_root.is_dir() {
        return Err(Failure::user(format!(
            "data root {} is not a directory",
            args.data_root.display()
        )));
    }
    let config = TrainConfig {
        batch_size: args.batch,
        epochs: args.epochs,
        learning_rate: args.lr,
        dropout_rate: args.dropout,
        augment_flips: !args.no_augment,
        seed: args.repro.seed,
    };
    config.validate()?;
    let out_dir = match &args.out {
        Some(d) => d.clone(),
        None => args
            .checkpoint
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let out_dir = if out_dir.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        out_dir
    };
    create_dir(&out_dir)?;

    let (data, subjects) = load_labelled(&args.data_root)?;
    if data.is_empty() {
        return Err(Failure::data(format!(
            "no labelled slices found under {}",
            args.data_root.display()
        )));
    }
    log::info!(
        "training on {} slices from {} subjects",
        data.len(),
        subjects.len()
    );
    let model =
        DrUnet104::<f32>::new(config.model_config(IN_CHANNELS, N_CLASS, args.width_divisor))?;
    let parameter_count = model.parameter_count();
    let mut trainer = Trainer::new(model, config)?;
    let history = trainer.run(&data, |epoch, loss, t| {
        log::info!("epoch {epoch}/{}: mean loss {loss:.6}", args.epochs);
        if let Some(every) = args.save_every.filter(|&n| n > 0) {
            if epoch % every == 0 {
                let mut path = args.checkpoint.clone().into_os_string();
                path.push(format!(".epoch{epoch}"));
                t.checkpoint().save(PathBuf::from(path))?;
            }
        }
        Ok(())
    })?;

    let ckpt: Checkpoint = trainer.checkpoint();
    ckpt.save(&args.checkpoint)?;
    let loss_path = out_dir.join("loss_history.csv");
    std::fs::write(&loss_path, loss_history_csv(&history)).map_err(|e| io(&loss_path, e))?;
    Manifest::new(
        "train",
        Config {
            args,
            slices: data.len(),
            subjects,
            parameter_count,
            final_loss: history.last().copied().unwrap_or(f64::NAN),
            checkpoint_sha256: sha256_file(&args.checkpoint)?,
        },
    )
    .write(&out_dir.join("train_manifest.json"))?;
    log::info!(
        "wrote {} and {}",
        display(&args.checkpoint),
        display(&loss_path)
    );
    Ok(())
}
