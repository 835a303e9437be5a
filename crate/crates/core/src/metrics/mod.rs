//! Region overlap and surface-distance metrics for label volumes.

pub mod conventions;
pub mod hausdorff;
pub mod overlap;
pub mod regions;
pub mod report;

pub use conventions::{percentile_linear, Conventions, EmptySentinel};
pub use hausdorff::{
    directed_surface_distances, hausdorff95, hausdorff_with, squared_distance_transform, surface,
    volume_diagonal, Spacing, UNIT_SPACING,
};
pub use overlap::{confusion, dice, sensitivity, specificity, Confusion};
pub use regions::{count, region_mask, region_masks, Mask, Region, RegionMaskSet};
pub use report::{
    evaluate_case, evaluate_case_with, mean_sd, render_csv, summarize, CohortSummary, MeanSd,
    MetricsReport, RegionMetrics, RegionSummary,
};
