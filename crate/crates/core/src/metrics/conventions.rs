//! Edge-case conventions for the metric suite, kept in one place so an
//! alternative scoring policy can be swapped in.

/// Value reported for HD95 when exactly one of the two masks is empty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EmptySentinel {
    /// Length of the volume diagonal in millimetres.
    VolumeDiagonal,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conventions {
    pub dice_both_empty: f64,
    pub dice_one_empty: f64,
    /// Sensitivity when the truth mask is empty.
    pub sensitivity_empty_truth: f64,
    /// Specificity when the truth mask covers the whole volume.
    pub specificity_full_truth: f64,
    pub hd_both_empty: f64,
    pub hd_one_empty: EmptySentinel,
    /// Percentile of the directed surface distances, interpolated linearly
    /// between order statistics.
    pub hd_percentile: f64,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            dice_both_empty: 1.0,
            dice_one_empty: 0.0,
            sensitivity_empty_truth: 1.0,
            specificity_full_truth: 1.0,
            hd_both_empty: 0.0,
            hd_one_empty: EmptySentinel::VolumeDiagonal,
            hd_percentile: 95.0,
        }
    }
}

impl Conventions {
    /// One-line description written into reports.
    pub fn describe(&self) -> String {
        let sentinel = match self.hd_one_empty {
            EmptySentinel::VolumeDiagonal => "volume diagonal in mm".to_string(),
            EmptySentinel::Fixed(v) => format!("{v}"),
        };
        format!(
            "both masks empty: dsc {} hd{} {}; one mask empty: dsc {} hd{} = {sentinel}; \
             empty truth sensitivity {}; full truth specificity {}; percentile linear",
            self.dice_both_empty,
            self.hd_percentile,
            self.hd_both_empty,
            self.dice_one_empty,
            self.hd_percentile,
            self.sensitivity_empty_truth,
            self.specificity_full_truth,
        )
    }
}

/// Percentile `p` (0..=100) with linear interpolation between the order
/// statistics at ranks `floor(r)` and `ceil(r)`, `r = p / 100 * (n - 1)`.
/// Sorts `values` in place.
pub fn percentile_linear(values: &mut [f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let rank = p.clamp(0.0, 100.0) / 100.0 * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Some(values[lo] + (values[hi] - values[lo]) * frac)
}
