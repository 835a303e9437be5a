//! In-memory volumes and the four-modality stack.

use std::fmt;

use crate::error::{Error, Result};

/// Dense 3-D array, index `(z * height + y) * width + x`; `z` is the
/// axial (slice) axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    depth: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Volume<T> {
    pub fn from_vec(dims: (usize, usize, usize), data: Vec<T>) -> Result<Self> {
        let (depth, height, width) = dims;
        if depth == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!("volume dims {dims:?} contain a zero")));
        }
        if data.len() != depth * height * width {
            return Err(Error::Shape(format!(
                "volume dims {dims:?} need {} values, got {}",
                depth * height * width,
                data.len()
            )));
        }
        Ok(Self {
            depth,
            height,
            width,
            data,
        })
    }

    pub fn filled(dims: (usize, usize, usize), value: T) -> Result<Self> {
        Self::from_vec(dims, vec![value; dims.0 * dims.1 * dims.2])
    }

    /// `(depth, height, width)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.depth, self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.height + y) * self.width + x
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> T {
        self.data[self.index(z, y, x)]
    }

    pub fn set(&mut self, z: usize, y: usize, x: usize, v: T) {
        let i = self.index(z, y, x);
        self.data[i] = v;
    }

    /// Axial plane `z`, row-major `(height, width)`.
    pub fn plane(&self, z: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[z * n..(z + 1) * n]
    }

    /// Stacks equally sized planes along the slice axis.
    pub fn from_planes(height: usize, width: usize, planes: &[&[T]]) -> Result<Self> {
        let mut data = Vec::with_capacity(planes.len() * height * width);
        for (z, p) in planes.iter().enumerate() {
            if p.len() != height * width {
                return Err(Error::Shape(format!(
                    "plane {z} has {} values, expected {height}x{width}",
                    p.len()
                )));
            }
            data.extend_from_slice(p);
        }
        Self::from_vec((planes.len(), height, width), data)
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            depth: self.depth,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Flair,
    T1,
    T1ce,
    T2,
}

impl Modality {
    /// Channel order of packed slices.
    pub const ALL: [Modality; 4] = [Modality::Flair, Modality::T1, Modality::T1ce, Modality::T2];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Flair => "flair",
            Modality::T1 => "t1",
            Modality::T1ce => "t1ce",
            Modality::T2 => "t2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn channel(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// External label values.
pub const LABEL_VALUES: [u8; 4] = [0, 1, 2, 4];

/// External label → contiguous class index.
pub fn label_to_class(label: u8) -> Option<usize> {
    LABEL_VALUES.iter().position(|&l| l == label)
}

/// Contiguous class index → external label.
pub fn class_to_label(class: usize) -> Option<u8> {
    LABEL_VALUES.get(class).copied()
}

/// Positions `(z, y, x)` holding values outside [`LABEL_VALUES`].
pub fn invalid_labels(labels: &Volume<u8>) -> Vec<(usize, usize, usize)> {
    let (_, h, w) = labels.dims();
    labels
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| label_to_class(v).is_none())
        .map(|(i, _)| (i / (h * w), (i / w) % h, i % w))
        .collect()
}

pub(crate) fn describe_positions(
    kind: &str,
    positions: &[(usize, usize, usize)],
    values: impl Fn(usize) -> u8,
) -> String {
    const SHOWN: usize = 8;
    let mut msg = format!(
        "{} {kind} with values outside {{0, 1, 2, 4}}:",
        positions.len()
    );
    for (i, p) in positions.iter().take(SHOWN).enumerate() {
        msg.push_str(&format!(" {:?}={}", p, values(i)));
    }
    if positions.len() > SHOWN {
        msg.push_str(" ...");
    }
    msg
}

/// Four co-registered modality volumes plus optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeStack {
    pub subject_id: String,
    /// Indexed by [`Modality::channel`].
    pub modalities: [Volume<f32>; 4],
    pub labels: Option<Volume<u8>>,
}

impl VolumeStack {
    pub fn new(
        subject_id: impl Into<String>,
        modalities: [Volume<f32>; 4],
        labels: Option<Volume<u8>>,
    ) -> Result<Self> {
        let stack = Self {
            subject_id: subject_id.into(),
            modalities,
            labels,
        };
        stack.validate()?;
        Ok(stack)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.modalities[0].dims()
    }

    pub fn modality(&self, m: Modality) -> &Volume<f32> {
        &self.modalities[m.channel()]
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        for m in Modality::ALL {
            if self.modality(m).dims() != dims {
                return Err(Error::Shape(format!(
                    "{}: {m} volume is {:?}, flair is {dims:?}",
                    self.subject_id,
                    self.modality(m).dims()
                )));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.dims() != dims {
                return Err(Error::Shape(format!(
                    "{}: label volume is {:?}, modalities are {dims:?}",
                    self.subject_id,
                    labels.dims()
                )));
            }
            let bad = invalid_labels(labels);
            if !bad.is_empty() {
                let msg = describe_positions("voxels", &bad, |i| {
                    let (z, y, x) = bad[i];
                    labels.get(z, y, x)
                });
                return Err(Error::Data(format!("{}: {msg}", self.subject_id)));
            }
        }
        Ok(())
    }
}
