//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic          7 bytes  "DRU104\0"
//! version        u32      currently 1
//! in_channels    u32
//! n_class        u32
//! width_divisor  u32
//! dropout_rate   f32
//! optimizer_step u64      0 when no optimizer state is stored
//! record_count   u32
//! record_count x {
//!     name_len u32, name (UTF-8)
//!     ndim u32, dims u32 x ndim
//!     values f32 x product(dims)
//! }
//! ```
//!
//! Records hold every parameter under its registry name, the running
//! statistics as `<norm>.running_mean` / `<norm>.running_var`, and, when an
//! optimizer is saved, its moments as `adam.m.<param>` / `adam.v.<param>`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::drunet::DrUnet104;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor4};
use crate::train::adam::{AdamState, Moments};

pub const MAGIC: &[u8; 7] = b"DRU104\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub in_channels: u32,
    pub n_class: u32,
    pub width_divisor: u32,
    pub dropout_rate: f32,
    pub optimizer_step: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<u32>,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub records: Vec<Record>,
}

fn to_f32<T: Real>(v: &[T]) -> Vec<f32> {
    v.iter().map(|&x| x.to_f64_lossy() as f32).collect()
}

fn from_f32<T: Real>(v: &[f32]) -> Vec<T> {
    v.iter().map(|&x| T::from_f64_lossy(f64::from(x))).collect()
}

fn running_mean_name(norm: &str) -> String {
    format!("{norm}.running_mean")
}

fn running_var_name(norm: &str) -> String {
    format!("{norm}.running_var")
}

impl Checkpoint {
    pub fn from_model<T: Real>(model: &DrUnet104<T>, optimizer: Option<&AdamState<T>>) -> Self {
        let cfg = model.config();
        let mut records = Vec::new();
        for (_, name, t) in model.params().iter() {
            records.push(Record {
                name: name.to_string(),
                dims: t.shape().dims().map(|d| d as u32).to_vec(),
                values: to_f32(t.data()),
            });
        }
        for norm in model.norm_layers() {
            let stats = &model.running_stats()[norm.slot];
            let dims = vec![stats.mean.len() as u32];
            records.push(Record {
                name: running_mean_name(&norm.name),
                dims: dims.clone(),
                values: to_f32(&stats.mean),
            });
            records.push(Record {
                name: running_var_name(&norm.name),
                dims,
                values: to_f32(&stats.var),
            });
        }
        let mut optimizer_step = 0;
        if let Some(state) = optimizer {
            optimizer_step = state.step;
            for ((_, name, t), moments) in model.params().iter().zip(&state.moments) {
                let dims: Vec<u32> = t.shape().dims().map(|d| d as u32).to_vec();
                records.push(Record {
                    name: format!("adam.m.{name}"),
                    dims: dims.clone(),
                    values: to_f32(&moments.m),
                });
                records.push(Record {
                    name: format!("adam.v.{name}"),
                    dims,
                    values: to_f32(&moments.v),
                });
            }
        }
        Self {
            header: CheckpointHeader {
                version: FORMAT_VERSION,
                in_channels: cfg.in_channels as u32,
                n_class: cfg.n_class as u32,
                width_divisor: cfg.width_divisor as u32,
                dropout_rate: cfg.dropout_rate as f32,
                optimizer_step,
            },
            records,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            in_channels: self.header.in_channels as usize,
            n_class: self.header.n_class as usize,
            dropout_rate: f64::from(self.header.dropout_rate),
            width_divisor: self.header.width_divisor as usize,
            seed: 0,
        }
    }

    fn record(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    /// Rebuilds the model, and the optimizer state when one was saved.
    pub fn restore<T: Real>(&self) -> Result<(DrUnet104<T>, Option<AdamState<T>>)> {
        let mut model = DrUnet104::<T>::new(self.model_config())?;
        let missing = |name: &str| Error::Data(format!("checkpoint has no record {name}"));
        let ids: Vec<_> = model.params().ids().collect();
        for &id in &ids {
            let name = model.params().name(id).to_string();
            let rec = self.record(&name).ok_or_else(|| missing(&name))?;
            let target = model.params_mut().get_mut(id);
            let expected: Vec<u32> = target.shape().dims().map(|d| d as u32).to_vec();
            if rec.dims != expected {
                return Err(Error::Shape(format!(
                    "record {name} has dims {:?}, model expects {expected:?}",
                    rec.dims
                )));
            }
            *target = Tensor4::from_vec(target.shape(), from_f32(&rec.values))?;
        }
        let norms: Vec<_> = model
            .norm_layers()
            .map(|n| (n.name.clone(), n.slot, n.channels))
            .collect();
        for (name, slot, channels) in norms {
            let mean = self
                .record(&running_mean_name(&name))
                .ok_or_else(|| missing(&name))?;
            let var = self
                .record(&running_var_name(&name))
                .ok_or_else(|| missing(&name))?;
            if mean.values.len() != channels || var.values.len() != channels {
                return Err(Error::Shape(format!(
                    "running statistics of {name} have the wrong length"
                )));
            }
            let stats = &mut model.running_stats_mut()[slot];
            stats.mean = from_f32(&mean.values);
            stats.var = from_f32(&var.values);
        }
        let optimizer = if self.header.optimizer_step > 0 {
            let mut moments = Vec::with_capacity(ids.len());
            for &id in &ids {
                let name = model.params().name(id);
                let m = self
                    .record(&format!("adam.m.{name}"))
                    .ok_or_else(|| missing(name))?;
                let v = self
                    .record(&format!("adam.v.{name}"))
                    .ok_or_else(|| missing(name))?;
                if m.values.len() != model.params().get(id).len()
                    || v.values.len() != m.values.len()
                {
                    return Err(Error::Shape(format!(
                        "optimizer moments of {name} have the wrong length"
                    )));
                }
                moments.push(Moments {
                    m: from_f32(&m.values),
                    v: from_f32(&v.values),
                });
            }
            Some(AdamState {
                moments,
                step: self.header.optimizer_step,
            })
        } else {
            None
        };
        Ok((model, optimizer))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let h = &self.header;
        w.write_all(MAGIC)?;
        w.write_all(&h.version.to_le_bytes())?;
        w.write_all(&h.in_channels.to_le_bytes())?;
        w.write_all(&h.n_class.to_le_bytes())?;
        w.write_all(&h.width_divisor.to_le_bytes())?;
        w.write_all(&h.dropout_rate.to_le_bytes())?;
        w.write_all(&h.optimizer_step.to_le_bytes())?;
        w.write_all(&(self.records.len() as u32).to_le_bytes())?;
        for r in &self.records {
            w.write_all(&(r.name.len() as u32).to_le_bytes())?;
            w.write_all(r.name.as_bytes())?;
            w.write_all(&(r.dims.len() as u32).to_le_bytes())?;
            for d in &r.dims {
                w.write_all(&d.to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(r.values.len() * 4);
            for v in &r.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Parses a checkpoint; `origin` is only used in error messages.
    pub fn read_from<R: Read>(r: &mut R, origin: &Path) -> Result<Self> {
        let fmt = |msg: &str| Error::format(origin, msg);
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)
            .map_err(|_| fmt("file too short for magic bytes"))?;
        if &magic != MAGIC {
            return Err(fmt("bad magic bytes (not a DRU104 checkpoint)"));
        }
        let mut rd = Reader { r, origin };
        let version = rd.u32()?;
        if version != FORMAT_VERSION {
            return Err(fmt(&format!("unsupported format version {version}")));
        }
        let header = CheckpointHeader {
            version,
            in_channels: rd.u32()?,
            n_class: rd.u32()?,
            width_divisor: rd.u32()?,
            dropout_rate: f32::from_bits(rd.u32()?),
            optimizer_step: rd.u64()?,
        };
        let count = rd.u32()?;
        let mut records = Vec::new();
        for _ in 0..count {
            let len = rd.u32()? as usize;
            let name =
                String::from_utf8(rd.bytes(len)?).map_err(|_| fmt("record name is not UTF-8"))?;
            let ndim = rd.u32()? as usize;
            if ndim > 8 {
                return Err(fmt(&format!("record {name} claims {ndim} dimensions")));
            }
            let dims = (0..ndim).map(|_| rd.u32()).collect::<Result<Vec<_>>>()?;
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .ok_or_else(|| fmt(&format!("record {name} is too large")))?;
            let raw = rd.bytes(numel * 4)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            records.push(Record { name, dims, values });
        }
        Ok(Self { header, records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file), path)
    }
}

struct Reader<'a, R> {
    r: &'a mut R,
    origin: &'a Path,
}

impl<R: Read> Reader<'_, R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.r
            .take(n as u64)
            .read_to_end(&mut buf)
            .map_err(|e| Error::io(self.origin, e))?;
        if buf.len() != n {
            return Err(Error::format(self.origin, "unexpected end of file"));
        }
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.bytes(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(&b);
        Ok(u64::from_le_bytes(a))
    }
}
