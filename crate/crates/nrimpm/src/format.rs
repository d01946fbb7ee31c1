//! `NRID` dataset files, their JSON sidecar, and `NRIM` checkpoints.
//!
//! Both binary formats are little-endian with a fixed header. Dataset:
//!
//! ```text
//! 0   magic "NRID"        4   version u32       8   family tag u32
//! 12  N u32   16  T u32   20  D u32   24  K u32  28  sample count u64
//! 36  per sample: states f64 [T, N, D], then graph u8 [N, N]
//! ```
//!
//! Checkpoint: a plain parameter file, then the training state, then a SHA-256
//! of everything before it. Readers that only want weights can stop after the
//! tensors.
//!
//! ```text
//! magic "NRIM", version u32, tensor count u32
//! per tensor: name length u32, UTF-8 name, rank u32, dims u32[rank], f64 data
//! epoch u64, adam step u64, has-best u8, best score f64, best epoch u64
//! config length u32, UTF-8 config JSON
//! adam first moments, then second moments, f64, in tensor order
//! sha256 [32]
//! ```

use std::fs;
use std::path::Path;

use nri_core::data::{Dataset, NormStats, RelationGraph, Trajectory};
use nri_core::params::{Param, ParamStore};
use nri_core::sim::{Family, SplitCounts, SystemSpec};
use nri_core::train::AdamState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DATASET_MAGIC: &[u8; 4] = b"NRID";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NRIM";
pub const FORMAT_VERSION: u32 = 1;
const DATASET_HEADER: usize = 36;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic at offset {offset}: expected {expected:?}")]
    BadMagic { offset: usize, expected: &'static str },
    #[error("unsupported version {found} at offset {offset}")]
    UnsupportedVersion { offset: usize, found: u32 },
    #[error("unknown family tag {tag} at offset {offset}")]
    UnknownFamily { offset: usize, tag: u32 },
    #[error("invalid header field at offset {offset}: {reason}")]
    BadHeader { offset: usize, reason: &'static str },
    #[error("truncated at offset {offset}: {needed} more bytes needed")]
    Truncated { offset: usize, needed: usize },
    #[error("length mismatch: header implies {expected} bytes, file has {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid graph entry at offset {offset}")]
    BadGraph { offset: usize },
    #[error("non-finite state value at offset {offset}")]
    NonFinite { offset: usize },
    #[error("checkpoint content hash does not match its header")]
    HashMismatch,
    #[error("invalid UTF-8 at offset {offset}")]
    BadText { offset: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Byte cursor that reports offsets in its errors.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], FormatError> {
        let available = self.buf.len() - self.pos;
        if available < len {
            return Err(FormatError::Truncated {
                offset: self.buf.len(),
                needed: len - available,
            });
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let bytes = self.take(n * 8)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn magic(&mut self, expected: &'static [u8; 4]) -> Result<(), FormatError> {
        let offset = self.pos;
        if self.take(4)? != expected {
            return Err(FormatError::BadMagic {
                offset,
                expected: std::str::from_utf8(expected).unwrap(),
            });
        }
        Ok(())
    }

    fn version(&mut self) -> Result<(), FormatError> {
        let offset = self.pos;
        match self.u32()? {
            FORMAT_VERSION => Ok(()),
            found => Err(FormatError::UnsupportedVersion { offset, found }),
        }
    }

    fn dim(&mut self, min: u32, reason: &'static str) -> Result<usize, FormatError> {
        let offset = self.pos;
        let v = self.u32()?;
        if v < min {
            return Err(FormatError::BadHeader { offset, reason });
        }
        Ok(v as usize)
    }

    fn text(&mut self) -> Result<String, FormatError> {
        let len = self.u32()? as usize;
        let offset = self.pos;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| FormatError::BadText { offset })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_text(out: &mut Vec<u8>, s: &str) {
    put_u32(out, u32::try_from(s.len()).expect("text shorter than 4 GiB"));
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_dataset(data: &Dataset) -> Vec<u8> {
    let (n, t, d) = (data.n, data.t, data.d);
    let mut out = Vec::with_capacity(DATASET_HEADER + data.len() * (t * n * d * 8 + n * n));
    out.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, data.family.tag());
    for v in [n, t, d, data.k] {
        put_u32(&mut out, v as u32);
    }
    put_u64(&mut out, data.len() as u64);
    for s in &data.samples {
        put_f64s(&mut out, &s.states);
        out.extend_from_slice(&s.graph.types);
    }
    out
}

pub fn decode_dataset(buf: &[u8]) -> Result<Dataset, FormatError> {
    let mut r = Reader::new(buf);
    r.magic(DATASET_MAGIC)?;
    r.version()?;
    let offset = r.pos;
    let tag = r.u32()?;
    let family = Family::from_tag(tag).ok_or(FormatError::UnknownFamily { offset, tag })?;
    let n = r.dim(2, "N must be at least 2")?;
    let t = r.dim(2, "T must be at least 2")?;
    let d = r.dim(1, "D must be positive")?;
    let k = r.dim(2, "K must be at least 2")?;
    let count = r.u64()? as usize;
    let per_sample = t * n * d * 8 + n * n;
    let expected = DATASET_HEADER + count * per_sample;
    if buf.len() != expected {
        if buf.len() < expected {
            return Err(FormatError::Truncated {
                offset: buf.len(),
                needed: expected - buf.len(),
            });
        }
        return Err(FormatError::LengthMismatch {
            expected,
            found: buf.len(),
        });
    }
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let start = r.pos;
        let states = r.f64s(t * n * d)?;
        if let Some(i) = states.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite { offset: start + i * 8 });
        }
        let start = r.pos;
        let types = r.take(n * n)?.to_vec();
        for (idx, &v) in types.iter().enumerate() {
            if v as usize >= k || (idx / n == idx % n && v != 0) {
                return Err(FormatError::BadGraph { offset: start + idx });
            }
        }
        samples.push(Trajectory {
            states,
            graph: RelationGraph { n, types },
        });
    }
    Ok(Dataset {
        family,
        n,
        t,
        d,
        k,
        samples,
    })
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<(), FormatError> {
    Ok(fs::write(path, encode_dataset(data))?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, FormatError> {
    decode_dataset(&fs::read(path)?)
}

/// JSON sidecar written next to the three split files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub spec: SystemSpec,
    pub counts: SplitCounts,
    /// Fitted on the training split; applied to every split when loading.
    pub norm: NormStats,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Fully resolved run configuration, as JSON.
    pub config: String,
    /// Completed epochs.
    pub epoch: usize,
    /// Best validation score so far and the epoch it was reached after.
    pub best: Option<(f64, usize)>,
    pub params: ParamStore,
    pub adam: AdamState,
}

pub fn config_hash(config: &str) -> [u8; 32] {
    Sha256::digest(config.as_bytes()).into()
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, ck.params.len() as u32);
    for p in ck.params.iter() {
        put_text(&mut out, &p.name);
        put_u32(&mut out, p.shape.len() as u32);
        for &s in &p.shape {
            put_u32(&mut out, s as u32);
        }
        put_f64s(&mut out, &p.data);
    }
    put_u64(&mut out, ck.epoch as u64);
    put_u64(&mut out, ck.adam.step);
    let (flag, score, epoch) = match ck.best {
        Some((score, epoch)) => (1, score, epoch),
        None => (0, 0.0, 0),
    };
    out.push(flag);
    put_f64s(&mut out, &[score]);
    put_u64(&mut out, epoch as u64);
    put_text(&mut out, &ck.config);
    for buf in ck.adam.m.iter().chain(&ck.adam.v) {
        put_f64s(&mut out, buf);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint, FormatError> {
    let mut r = Reader::new(buf);
    r.magic(CHECKPOINT_MAGIC)?;
    r.version()?;
    let Some(body_len) = buf.len().checked_sub(32).filter(|&l| l >= r.pos) else {
        return Err(FormatError::Truncated {
            offset: buf.len(),
            needed: r.pos + 32 - buf.len(),
        });
    };
    if Sha256::digest(&buf[..body_len]).as_slice() != &buf[body_len..] {
        return Err(FormatError::HashMismatch);
    }
    let mut r = Reader {
        buf: &buf[..body_len],
        pos: r.pos,
    };
    let count = r.u32()? as usize;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name = r.text()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
        let data = r.f64s(shape.iter().product())?;
        params.add(name, &shape, data);
    }
    let epoch = r.u64()? as usize;
    let step = r.u64()?;
    let has_best = r.take(1)?[0] == 1;
    let score = r.f64()?;
    let best_epoch = r.u64()? as usize;
    let config = r.text()?;
    let sizes: Vec<usize> = params.iter().map(|p: &Param| p.data.len()).collect();
    let m = sizes.iter().map(|&s| r.f64s(s)).collect::<Result<Vec<_>, _>>()?;
    let v = sizes.iter().map(|&s| r.f64s(s)).collect::<Result<Vec<_>, _>>()?;
    if r.pos != body_len {
        return Err(FormatError::LengthMismatch {
            expected: r.pos + 32,
            found: buf.len(),
        });
    }
    Ok(Checkpoint {
        config,
        epoch,
        best: has_best.then_some((score, best_epoch)),
        params,
        adam: AdamState { m, v, step },
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), FormatError> {
    // Write-then-rename so an interrupted save never leaves a torn file.
    let tmp = path.with_extension("nrim.tmp");
    fs::write(&tmp, encode_checkpoint(ck))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, FormatError> {
    decode_checkpoint(&fs::read(path)?)
}
