//! Evaluation regions derived from label volumes.

use std::fmt;

use crate::data::{invalid_labels, Volume};
use crate::error::{Error, Result};

pub type Mask = Volume<bool>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    /// Labels {1, 2, 4}.
    WholeTumor,
    /// Labels {1, 4}.
    TumorCore,
    /// Label 4.
    Enhancing,
}

impl Region {
    /// Report order: WT, ET, TC.
    pub const ALL: [Region; 3] = [Region::WholeTumor, Region::Enhancing, Region::TumorCore];

    pub fn abbrev(self) -> &'static str {
        match self {
            Region::WholeTumor => "WT",
            Region::TumorCore => "TC",
            Region::Enhancing => "ET",
        }
    }

    pub fn contains(self, label: u8) -> bool {
        match self {
            Region::WholeTumor => matches!(label, 1 | 2 | 4),
            Region::TumorCore => matches!(label, 1 | 4),
            Region::Enhancing => label == 4,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionMaskSet {
    pub wt: Mask,
    pub tc: Mask,
    pub et: Mask,
}

impl RegionMaskSet {
    pub fn get(&self, region: Region) -> &Mask {
        match region {
            Region::WholeTumor => &self.wt,
            Region::TumorCore => &self.tc,
            Region::Enhancing => &self.et,
        }
    }
}

pub fn region_mask(labels: &Volume<u8>, region: Region) -> Mask {
    labels.map(|l| region.contains(l))
}

pub fn region_masks(labels: &Volume<u8>) -> Result<RegionMaskSet> {
    let bad = invalid_labels(labels);
    if let Some(&(z, y, x)) = bad.first() {
        return Err(Error::Data(format!(
            "{} voxels with labels outside {{0, 1, 2, 4}}, first at ({z}, {y}, {x}) = {}",
            bad.len(),
            labels.get(z, y, x)
        )));
    }
    Ok(RegionMaskSet {
        wt: region_mask(labels, Region::WholeTumor),
        tc: region_mask(labels, Region::TumorCore),
        et: region_mask(labels, Region::Enhancing),
    })
}

pub fn count(mask: &Mask) -> usize {
    mask.data().iter().filter(|&&b| b).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_voxel_of_each_label() {
        let labels = Volume::from_vec((1, 1, 4), vec![1, 2, 4, 0]).unwrap();
        let m = region_masks(&labels).unwrap();
        assert_eq!((count(&m.wt), count(&m.tc), count(&m.et)), (3, 2, 1));
    }

    #[test]
    fn foreign_label_is_rejected() {
        let labels = Volume::from_vec((1, 1, 2), vec![0, 3]).unwrap();
        assert!(region_masks(&labels).is_err());
    }
}
