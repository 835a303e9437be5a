//! Raw volume container.
//!
//! A UTF-8 text header of `key value` lines, terminated by an empty line,
//! followed by the voxels as little-endian `f32` in `(z, y, x)` row-major
//! order:
//!
//! ```text
//! DRUVOL 1
//! modality flair
//! dims 155 240 240
//! dtype f32le
//!
//! <depth * height * width little-endian f32>
//! ```
//!
//! `dims` is `depth height width`; the slice axis comes first. Label
//! volumes use modality `seg`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::volume::{invalid_labels, Modality, Volume, VolumeStack};
use crate::error::{Error, Result};

pub const RAW_MAGIC: &str = "DRUVOL 1";
pub const LABEL_MODALITY: &str = "seg";
pub const VOLUME_EXTENSION: &str = "vol";

#[derive(Clone, Debug, PartialEq)]
pub struct RawVolume {
    pub modality: String,
    pub volume: Volume<f32>,
}

pub fn write_raw_volume<W: Write>(
    w: &mut W,
    modality: &str,
    volume: &Volume<f32>,
) -> std::io::Result<()> {
    let (d, h, wd) = volume.dims();
    write!(
        w,
        "{RAW_MAGIC}\nmodality {modality}\ndims {d} {h} {wd}\ndtype f32le\n\n"
    )?;
    let mut buf = Vec::with_capacity(volume.len() * 4);
    for v in volume.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn save_raw_volume(path: &Path, modality: &str, volume: &Volume<f32>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_raw_volume(&mut w, modality, volume).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_raw_volume<R: BufRead>(r: &mut R, origin: &Path) -> Result<RawVolume> {
    let fmt = |msg: String| Error::format(origin, msg);
    let mut line = String::new();
    let mut next_line = |r: &mut R| -> Result<String> {
        line.clear();
        let n = r
            .read_line(&mut line)
            .map_err(|_| fmt("header is not UTF-8 text".into()))?;
        if n == 0 {
            return Err(fmt("header ended before the blank separator line".into()));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };
    if next_line(r)? != RAW_MAGIC {
        return Err(fmt(format!("missing \"{RAW_MAGIC}\" header line")));
    }
    let mut modality = None;
    let mut dims = None;
    let mut dtype = None;
    loop {
        let l = next_line(r)?;
        if l.is_empty() {
            break;
        }
        let (key, value) = l.split_once(' ').unwrap_or((&l, ""));
        match key {
            "modality" => modality = Some(value.trim().to_string()),
            "dims" => {
                let parts: Vec<usize> = value
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| fmt(format!("bad dims line {l:?}")))?;
                if parts.len() != 3 {
                    return Err(fmt(format!("dims needs three values, got {l:?}")));
                }
                dims = Some((parts[0], parts[1], parts[2]));
            }
            "dtype" => dtype = Some(value.trim().to_string()),
            _ => return Err(fmt(format!("unknown header key {key:?}"))),
        }
    }
    let modality = modality.ok_or_else(|| fmt("header has no modality line".into()))?;
    let dims = dims.ok_or_else(|| fmt("header has no dims line".into()))?;
    match dtype.as_deref() {
        Some("f32le") => {}
        Some(other) => return Err(fmt(format!("unsupported dtype {other:?}"))),
        None => return Err(fmt("header has no dtype line".into())),
    }
    let count = dims
        .0
        .checked_mul(dims.1)
        .and_then(|v| v.checked_mul(dims.2))
        .ok_or_else(|| fmt(format!("dims {dims:?} overflow")))?;
    let mut raw = Vec::new();
    r.take(count as u64 * 4 + 1)
        .read_to_end(&mut raw)
        .map_err(|e| Error::io(origin, e))?;
    if raw.len() != count * 4 {
        return Err(fmt(format!(
            "payload has {} bytes, dims {dims:?} need {}",
            raw.len(),
            count * 4
        )));
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(RawVolume {
        modality,
        volume: Volume::from_vec(dims, data).map_err(|e| fmt(e.to_string()))?,
    })
}

pub fn load_raw_volume(path: &Path) -> Result<RawVolume> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw_volume(&mut BufReader::new(file), path)
}

/// Converts a float label volume, rejecting anything outside {0, 1, 2, 4}.
pub fn labels_from_f32(volume: &Volume<f32>, origin: &Path) -> Result<Volume<u8>> {
    let mut out = Vec::with_capacity(volume.len());
    for (i, &v) in volume.data().iter().enumerate() {
        if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
            let (_, h, w) = volume.dims();
            return Err(Error::Data(format!(
                "{}: voxel ({}, {}, {}) holds non-label value {v}",
                origin.display(),
                i / (h * w),
                (i / w) % h,
                i % w
            )));
        }
        out.push(v as u8);
    }
    let labels = Volume::from_vec(volume.dims(), out)?;
    let bad = invalid_labels(&labels);
    if let Some(&(z, y, x)) = bad.first() {
        return Err(Error::Data(format!(
            "{}: {} voxels with values outside {{0, 1, 2, 4}}, first at ({z}, {y}, {x}) = {}",
            origin.display(),
            bad.len(),
            labels.get(z, y, x)
        )));
    }
    Ok(labels)
}

pub fn labels_to_f32(labels: &Volume<u8>) -> Volume<f32> {
    labels.map(f32::from)
}

/// `<root>/<subject>/<subject>_<kind>.vol`.
pub fn subject_volume_path(root: &Path, subject: &str, kind: &str) -> PathBuf {
    root.join(subject)
        .join(format!("{subject}_{kind}.{VOLUME_EXTENSION}"))
}

/// Loads the four modalities of `subject`, plus its labels when a
/// `_seg` volume exists.
pub fn load_subject(root: &Path, subject: &str) -> Result<VolumeStack> {
    let mut mods = Vec::with_capacity(4);
    for m in Modality::ALL {
        let path = subject_volume_path(root, subject, m.name());
        if !path.exists() {
            return Err(Error::Data(format!(
                "{subject}: missing {m} modality (expected {})",
                path.display()
            )));
        }
        let raw = load_raw_volume(&path)?;
        if raw.modality != m.name() {
            return Err(Error::format(
                &path,
                format!("header names modality {:?}, expected {m}", raw.modality),
            ));
        }
        mods.push(raw.volume);
    }
    let seg = subject_volume_path(root, subject, LABEL_MODALITY);
    let labels = if seg.exists() {
        let raw = load_raw_volume(&seg)?;
        Some(labels_from_f32(&raw.volume, &seg)?)
    } else {
        None
    };
    let modalities: [Volume<f32>; 4] = mods.try_into().expect("four modalities");
    VolumeStack::new(subject, modalities, labels)
}

pub fn save_subject(root: &Path, stack: &VolumeStack) -> Result<()> {
    let dir = root.join(&stack.subject_id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for m in Modality::ALL {
        save_raw_volume(
            &subject_volume_path(root, &stack.subject_id, m.name()),
            m.name(),
            stack.modality(m),
        )?;
    }
    if let Some(labels) = &stack.labels {
        save_label_volume(root, &stack.subject_id, labels)?;
    }
    Ok(())
}

pub fn save_label_volume(root: &Path, subject: &str, labels: &Volume<u8>) -> Result<PathBuf> {
    let dir = root.join(subject);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = subject_volume_path(root, subject, LABEL_MODALITY);
    save_raw_volume(&path, LABEL_MODALITY, &labels_to_f32(labels))?;
    Ok(path)
}

pub fn load_label_volume(path: &Path) -> Result<Volume<u8>> {
    let raw = load_raw_volume(path)?;
    labels_from_f32(&raw.volume, path)
}

/// Sorted names of the sub-directories of `root`.
pub fn list_subjects(root: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            if let Some(name) = entry.file_name().to_str() {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}
