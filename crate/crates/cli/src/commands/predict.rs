use std::path::Path;

use drunet_core::data::{list_subjects, read_subject_slices, save_label_volume};
use drunet_core::model::Checkpoint;
use drunet_core::train::predict_subject;
use serde::Serialize;

use super::{create_dir, display};
use crate::failure::Failure;
use crate::manifest::{sha256_file, Manifest};
use crate::Repro;

#[derive(Serialize)]
struct Config<'a> {
    checkpoint: String,
    checkpoint_sha256: String,
    data_root: String,
    out: String,
    batch: usize,
    repro: &'a Repro,
    subjects: Vec<String>,
}

pub fn run(
    checkpoint: &Path,
    data_root: &Path,
    out: &Path,
    batch: usize,
    repro: &Repro,
) -> Result<(), Failure> {
    if batch == 0 {
        return Err(Failure::user("--batch must be at least 1"));
    }
    if !data_root.is_dir() {
        return Err(Failure::user(format!(
            "data root {} is not a directory",
            data_root.display()
        )));
    }
    let ckpt = Checkpoint::load(checkpoint)?;
    let (model, _) = ckpt.restore::<f32>()?;
    let subjects = list_subjects(data_root)?;
    create_dir(out)?;
    let mut done = Vec::new();
    for subject in subjects {
        let slices = read_subject_slices(&data_root.join(&subject), &subject)?;
        if slices.is_empty() {
            log::warn!("{subject}: no slices, skipped");
            continue;
        }
        let volume = predict_subject(&model, &slices, batch)
            .map_err(|e| Failure::from(e).prefixed(&subject))?;
        let path = save_label_volume(out, &subject, &volume)?;
        log::info!("{subject}: {} slices -> {}", slices.len(), display(&path));
        done.push(subject);
    }
    if done.is_empty() {
        return Err(Failure::data(format!(
            "no slices found under {}",
            data_root.display()
        )));
    }
    Manifest::new(
        "predict",
        Config {
            checkpoint: display(checkpoint),
            checkpoint_sha256: sha256_file(checkpoint)?,
            data_root: display(data_root),
            out: display(out),
            batch,
            repro,
            subjects: done,
        },
    )
    .write(&out.join("predict_manifest.json"))
}
