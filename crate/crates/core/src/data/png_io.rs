//! PNG encoding of slices (RGBA8, one channel per modality) and label
//! masks (gray8 holding raw label values).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::slices::{validate_label_plane, SliceSample, SLICE_CHANNELS};
use crate::error::{Error, Result};

pub fn slice_file_name(subject: &str, index: usize) -> String {
    format!("{subject}_slice_{index:03}.png")
}

pub fn mask_file_name(subject: &str, index: usize) -> String {
    format!("{subject}_seg_{index:03}.png")
}

/// Decoded 8-bit image, samples interleaved per pixel.
struct Decoded {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

fn encode(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    samples: &[u8],
) -> Result<()> {
    let to_err = |e: png::EncodingError| Error::format(path, e.to_string());
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    {
        let mut enc = png::Encoder::new(&mut w, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(to_err)?;
        writer.write_image_data(samples).map_err(to_err)?;
        writer.finish().map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn decode(path: &Path, channels: usize) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, format!("not a readable PNG: {e}")))?;
    let info = reader.info();
    let found = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(Error::format(path, "palette images are not supported"));
        }
    };
    if found != channels {
        return Err(Error::ChannelCount {
            path: path.to_path_buf(),
            expected: channels,
            found,
        });
    }
    let depth = info.bit_depth as u8;
    if depth != 8 {
        return Err(Error::BitDepth {
            path: path.to_path_buf(),
            expected: 8,
            found: depth,
        });
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, format!("corrupt image data: {e}")))?;
    buf.truncate(frame.buffer_size());
    if buf.len() != width * height * channels {
        return Err(Error::format(
            path,
            "decoded size does not match the header",
        ));
    }
    Ok(Decoded {
        width,
        height,
        samples: buf,
    })
}

/// Writes the 4-channel image; values above 254 are rejected.
pub fn write_slice_image(path: &Path, sample: &SliceSample) -> Result<()> {
    sample.validate()?;
    if let Some(v) = sample.image.iter().find(|&&v| v > 254) {
        return Err(Error::Data(format!(
            "{} slice {}: intensity {v} outside [0, 254]",
            sample.subject_id, sample.slice_index
        )));
    }
    let n = sample.height * sample.width;
    let mut rgba = vec![0u8; n * SLICE_CHANNELS];
    for c in 0..SLICE_CHANNELS {
        for (i, &v) in sample.channel(c).iter().enumerate() {
            rgba[i * SLICE_CHANNELS + c] = v;
        }
    }
    encode(
        path,
        sample.width,
        sample.height,
        png::ColorType::Rgba,
        &rgba,
    )
}

pub fn write_mask(path: &Path, width: usize, height: usize, label: &[u8]) -> Result<()> {
    if label.len() != width * height {
        return Err(Error::Shape(format!(
            "mask has {} values for {height}x{width}",
            label.len()
        )));
    }
    validate_label_plane(label, width, &path.display().to_string())?;
    encode(path, width, height, png::ColorType::Grayscale, label)
}

/// Returns `(height, width, channel-major image)`.
pub fn read_slice_image(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let d = decode(path, SLICE_CHANNELS)?;
    let n = d.width * d.height;
    let mut image = vec![0u8; n * SLICE_CHANNELS];
    for (i, px) in d.samples.chunks_exact(SLICE_CHANNELS).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            image[c * n + i] = v;
        }
    }
    Ok((d.height, d.width, image))
}

/// Returns `(height, width, labels)`, validated against {0, 1, 2, 4}.
pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let d = decode(path, 1)?;
    validate_label_plane(&d.samples, d.width, &path.display().to_string())?;
    Ok((d.height, d.width, d.samples))
}

/// Writes `<dir>/<subject>_slice_<i>.png` and, when labelled,
/// `<dir>/<subject>_seg_<i>.png`.
pub fn write_slice(dir: &Path, sample: &SliceSample) -> Result<()> {
    write_slice_image(
        &dir.join(slice_file_name(&sample.subject_id, sample.slice_index)),
        sample,
    )?;
    if let Some(label) = &sample.label {
        write_mask(
            &dir.join(mask_file_name(&sample.subject_id, sample.slice_index)),
            sample.width,
            sample.height,
            label,
        )?;
    }
    Ok(())
}

pub fn read_slice(dir: &Path, subject: &str, index: usize) -> Result<SliceSample> {
    let (height, width, image) = read_slice_image(&dir.join(slice_file_name(subject, index)))?;
    let mask = dir.join(mask_file_name(subject, index));
    let label = if mask.exists() {
        let (mh, mw, label) = read_mask(&mask)?;
        if (mh, mw) != (height, width) {
            return Err(Error::Shape(format!(
                "{}: mask is {mh}x{mw}, image is {height}x{width}",
                mask.display()
            )));
        }
        Some(label)
    } else {
        None
    };
    Ok(SliceSample {
        subject_id: subject.to_string(),
        slice_index: index,
        height,
        width,
        image,
        label,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SliceFiles {
    pub index: usize,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
}

fn parse_index(name: &str, prefix: &str) -> Option<usize> {
    let digits = name.strip_prefix(prefix)?.strip_suffix(".png")?;
    if digits.len() < 3 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Slice images of `subject` in `dir`, sorted by index.
pub fn list_slice_files(dir: &Path, subject: &str) -> Result<Vec<SliceFiles>> {
    let image_prefix = format!("{subject}_slice_");
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(index) = parse_index(name, &image_prefix) {
            let mask = dir.join(mask_file_name(subject, index));
            out.push(SliceFiles {
                index,
                image: entry.path(),
                mask: mask.exists().then_some(mask),
            });
        }
    }
    out.sort_by_key(|f| f.index);
    Ok(out)
}

/// Every slice of `subject` stored in `dir`, sorted by index.
pub fn read_subject_slices(dir: &Path, subject: &str) -> Result<Vec<SliceSample>> {
    list_slice_files(dir, subject)?
        .iter()
        .map(|f| read_slice(dir, subject, f.index))
        .collect()
}
