use std::collections::BTreeSet;
use std::path::Path;

use drunet_core::data::{list_subjects, load_label_volume, subject_volume_path, LABEL_MODALITY};
use drunet_core::metrics::{evaluate_case, render_csv, Conventions};
use serde::Serialize;

use super::{create_dir, display};
use crate::failure::{io, Failure};
use crate::manifest::{sha256_file, Manifest};

#[derive(Serialize)]
struct Config {
    pred: String,
    truth: String,
    out: String,
    evaluated: Vec<String>,
    skipped: Vec<(String, String)>,
    report_sha256: String,
}

fn subjects_with_labels(root: &Path) -> Result<BTreeSet<String>, Failure> {
    Ok(list_subjects(root)?
        .into_iter()
        .filter(|s| subject_volume_path(root, s, LABEL_MODALITY).is_file())
        .collect())
}

pub fn run(pred: &Path, truth: &Path, out: &Path) -> Result<(), Failure> {
    for root in [pred, truth] {
        if !root.is_dir() {
            return Err(Failure::user(format!(
                "{} is not a directory",
                root.display()
            )));
        }
    }
    let pred_set = subjects_with_labels(pred)?;
    let truth_set = subjects_with_labels(truth)?;
    let common: Vec<&String> = pred_set.intersection(&truth_set).collect();
    if common.is_empty() {
        return Err(Failure::data(format!(
            "no subject has both a prediction under {} and ground truth under {}",
            pred.display(),
            truth.display()
        )));
    }
    let mut skipped: Vec<(String, String)> = Vec::new();
    for s in truth_set.difference(&pred_set) {
        skipped.push((s.clone(), "no prediction".into()));
    }
    for s in pred_set.difference(&truth_set) {
        skipped.push((s.clone(), "no ground truth".into()));
    }
    skipped.sort();
    let mut reports = Vec::with_capacity(common.len());
    for subject in common {
        let p = load_label_volume(&subject_volume_path(pred, subject, LABEL_MODALITY))?;
        let t = load_label_volume(&subject_volume_path(truth, subject, LABEL_MODALITY))?;
        let report =
            evaluate_case(subject, &p, &t).map_err(|e| Failure::from(e).prefixed(subject))?;
        log::info!(
            "{subject}: dsc WT {:.4} ET {:.4} TC {:.4}",
            report.regions[0].dsc,
            report.regions[1].dsc,
            report.regions[2].dsc
        );
        reports.push(report);
    }
    for (s, why) in &skipped {
        log::warn!("{s}: skipped ({why})");
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let csv = render_csv(&reports, &skipped, &Conventions::default());
    std::fs::write(out, csv).map_err(|e| io(out, e))?;
    let mut manifest_path = out.as_os_str().to_owned();
    manifest_path.push(".manifest.json");
    Manifest::new(
        "evaluate",
        Config {
            pred: display(pred),
            truth: display(truth),
            out: display(out),
            evaluated: reports.iter().map(|r| r.subject_id.clone()).collect(),
            skipped,
            report_sha256: sha256_file(out)?,
        },
    )
    .write(Path::new(&manifest_path))
}
