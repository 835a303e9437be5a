//! Per-case evaluation, cohort aggregation and the CSV report.

use std::fmt::Write as _;

use super::conventions::Conventions;
use super::hausdorff::{hausdorff_with, Spacing, UNIT_SPACING};
use super::overlap::confusion;
use super::regions::{region_masks, Region};
use crate::data::Volume;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionMetrics {
    pub region: Region,
    pub dsc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Millimetres, or the empty-mask sentinel.
    pub hd95: f64,
    pub hd95_is_sentinel: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub subject_id: String,
    /// In [`Region::ALL`] order.
    pub regions: Vec<RegionMetrics>,
}

impl MetricsReport {
    pub fn region(&self, region: Region) -> &RegionMetrics {
        self.regions
            .iter()
            .find(|r| r.region == region)
            .expect("reports cover every region")
    }
}

pub fn evaluate_case(
    subject_id: &str,
    pred: &Volume<u8>,
    truth: &Volume<u8>,
) -> Result<MetricsReport> {
    evaluate_case_with(
        subject_id,
        pred,
        truth,
        UNIT_SPACING,
        &Conventions::default(),
    )
}

pub fn evaluate_case_with(
    subject_id: &str,
    pred: &Volume<u8>,
    truth: &Volume<u8>,
    spacing: Spacing,
    conv: &Conventions,
) -> Result<MetricsReport> {
    let p = region_masks(pred)?;
    let t = region_masks(truth)?;
    let mut regions = Vec::with_capacity(3);
    for region in Region::ALL {
        let (pm, tm) = (p.get(region), t.get(region));
        let c = confusion(pm, tm)?;
        let (hd95, hd95_is_sentinel) = hausdorff_with(pm, tm, spacing, conv)?;
        regions.push(RegionMetrics {
            region,
            dsc: c.dice(conv),
            sensitivity: c.sensitivity(conv),
            specificity: c.specificity(conv),
            hd95,
            hd95_is_sentinel,
        });
    }
    Ok(MetricsReport {
        subject_id: subject_id.to_string(),
        regions,
    })
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

pub fn mean_sd(values: &[f64]) -> MeanSd {
    if values.is_empty() {
        return MeanSd::default();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    MeanSd {
        mean,
        sd: var.sqrt(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionSummary {
    pub region: Region,
    pub dsc: MeanSd,
    pub sensitivity: MeanSd,
    pub specificity: MeanSd,
    /// Sentinel values are included as reported.
    pub hd95: MeanSd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortSummary {
    pub cases: usize,
    pub regions: Vec<RegionSummary>,
}

impl CohortSummary {
    pub fn region(&self, region: Region) -> &RegionSummary {
        self.regions
            .iter()
            .find(|r| r.region == region)
            .expect("summaries cover every region")
    }
}

pub fn summarize(reports: &[MetricsReport]) -> CohortSummary {
    let regions = Region::ALL
        .iter()
        .map(|&region| {
            let col = |f: fn(&RegionMetrics) -> f64| -> MeanSd {
                let v: Vec<f64> = reports.iter().map(|r| f(r.region(region))).collect();
                mean_sd(&v)
            };
            RegionSummary {
                region,
                dsc: col(|m| m.dsc),
                sensitivity: col(|m| m.sensitivity),
                specificity: col(|m| m.specificity),
                hd95: col(|m| m.hd95),
            }
        })
        .collect();
    CohortSummary {
        cases: reports.len(),
        regions,
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

/// CSV text: one row per case and region, then a cohort summary block
/// (metric rows, `<region>` and `<region>_sd` columns), then skipped
/// subjects. Comment lines start with `#`.
pub fn render_csv(
    reports: &[MetricsReport],
    skipped: &[(String, String)],
    conv: &Conventions,
) -> String {
    let mut out = String::new();
    out.push_str("subject,region,dsc,sensitivity,specificity,hd95\n");
    for r in reports {
        for m in &r.regions {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.subject_id,
                m.region,
                num(m.dsc),
                num(m.sensitivity),
                num(m.specificity),
                num(m.hd95)
            );
        }
    }
    let summary = summarize(reports);
    let _ = writeln!(
        out,
        "\n# cohort summary, {} cases, mean and population sd",
        summary.cases
    );
    out.push_str("metric");
    for s in &summary.regions {
        let _ = write!(out, ",{0},{0}_sd", s.region);
    }
    out.push('\n');
    let rows: [(&str, fn(&RegionSummary) -> MeanSd); 4] = [
        ("dsc", |s| s.dsc),
        ("sensitivity", |s| s.sensitivity),
        ("specificity", |s| s.specificity),
        ("hd95", |s| s.hd95),
    ];
    for (name, get) in rows {
        out.push_str(name);
        for s in &summary.regions {
            let v = get(s);
            let _ = write!(out, ",{},{}", num(v.mean), num(v.sd));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "# conventions: {}", conv.describe());
    if !skipped.is_empty() {
        out.push_str("\n# skipped subjects\nsubject,reason\n");
        for (s, why) in skipped {
            let _ = writeln!(out, "{s},{}", why.replace([',', '\n'], ";"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_sd() {
        let m = mean_sd(&[0.6, 0.8]);
        assert!((m.mean - 0.7).abs() < 1e-12);
        assert!((m.sd - 0.1).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction() {
        let truth = Volume::from_vec((2, 2, 2), vec![0, 1, 2, 4, 0, 0, 4, 1]).unwrap();
        let r = evaluate_case("a", &truth, &truth).unwrap();
        for m in &r.regions {
            assert_eq!(
                (m.dsc, m.hd95, m.sensitivity, m.specificity),
                (1.0, 0.0, 1.0, 1.0)
            );
        }
        let csv = render_csv(
            &[r],
            &[("b".into(), "no prediction".into())],
            &Conventions::default(),
        );
        assert!(
            csv.contains("a,WT,1.000000,1.000000,1.000000,0.000000"),
            "{csv}"
        );
        assert!(csv.contains("dsc,1.000000,0.000000"), "{csv}");
        assert!(
            csv.contains("# skipped subjects\nsubject,reason\nb,no prediction"),
            "{csv}"
        );
    }
}
