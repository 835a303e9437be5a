use std::path::Path;

use drunet_core::data::{
    list_subjects, load_subject, normalize_stack, volume_to_slices, write_slice, Modality,
    NormalizationStats,
};
use serde::Serialize;

use super::{create_dir, display};
use crate::failure::{io, Failure};
use crate::manifest::Manifest;
use crate::Repro;

#[derive(Serialize)]
struct ModalityStats {
    modality: &'static str,
    mean: f64,
    sd: f64,
    foreground_voxels: usize,
}

#[derive(Serialize)]
struct StatsSidecar<'a> {
    subject: &'a str,
    dims: [usize; 3],
    slices: usize,
    modalities: Vec<ModalityStats>,
}

#[derive(Serialize)]
struct Config<'a> {
    data_root: String,
    out: String,
    repro: &'a Repro,
    processed: Vec<String>,
    skipped: Vec<(String, String)>,
}

fn process_subject(data_root: &Path, out: &Path, subject: &str) -> Result<usize, Failure> {
    let stack = load_subject(data_root, subject)?;
    let normalized = normalize_stack(&stack)?;
    let dir = out.join(subject);
    create_dir(&dir)?;
    let slices = volume_to_slices(&normalized);
    for s in &slices {
        write_slice(&dir, s)?;
    }
    let (d, h, w) = stack.dims();
    let stats = |m: Modality, s: &NormalizationStats| ModalityStats {
        modality: m.name(),
        mean: s.mean,
        sd: s.sd,
        foreground_voxels: s.foreground_voxels,
    };
    let sidecar = StatsSidecar {
        subject,
        dims: [d, h, w],
        slices: slices.len(),
        modalities: Modality::ALL
            .iter()
            .zip(&normalized.stats)
            .map(|(&m, s)| stats(m, s))
            .collect(),
    };
    let path = dir.join(format!("{subject}_stats.json"));
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| io(&path, e))?;
    Ok(slices.len())
}

pub fn run(data_root: &Path, out: &Path, repro: &Repro) -> Result<(), Failure> {
    if !data_root.is_dir() {
        return Err(Failure::user(format!(
            "data root {} is not a directory",
            data_root.display()
        )));
    }
    let subjects = list_subjects(data_root)?;
    if subjects.is_empty() {
        return Err(Failure::data(format!(
            "no subject directories under {}",
            data_root.display()
        )));
    }
    create_dir(out)?;
    let mut processed = Vec::new();
    let mut skipped = Vec::new();
    for subject in &subjects {
        match process_subject(data_root, out, subject) {
            Ok(n) => {
                log::info!("{subject}: wrote {n} slices");
                processed.push(subject.clone());
            }
            Err(f) if f.code == Failure::DATA => {
                log::warn!("{subject}: skipped: {}", f.message);
                skipped.push((subject.clone(), f.message));
            }
            Err(f) => return Err(f),
        }
    }
    let all_failed = processed.is_empty();
    let first_reason = skipped.first().map(|(s, why)| format!("{s}: {why}"));
    Manifest::new(
        "preprocess",
        Config {
            data_root: display(data_root),
            out: display(out),
            repro,
            processed,
            skipped,
        },
    )
    .write(&out.join("preprocess_manifest.json"))?;
    if all_failed {
        return Err(Failure::data(format!(
            "every subject failed; first: {}",
            first_reason.unwrap_or_default()
        )));
    }
    Ok(())
}
