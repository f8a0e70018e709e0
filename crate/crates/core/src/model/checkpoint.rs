//! Little-endian checkpoint format.
//!
//! ```text
//! magic        4 bytes  "TRJL"
//! version      u32      1
//! config       u32 n_layers, n_heads, d_model, d_ff, context_len, vocab_size
//!              u64 seed
//!              u32 scalar width in bytes (4 = f32, 8 = f64)
//! step         u64
//! n_tensors    u32
//! parameters   n_tensors × { u32 rank, u32 dims[rank], scalar data[prod(dims)] }
//! adam m       n_tensors × same layout
//! adam v       n_tensors × same layout
//! data cursor  u64 seed, u64 epoch, u64 batch position
//! ```
//!
//! Tensors appear in the order of [`Parameters::tensors`]. The file ends
//! right after the data cursor.

use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{Adam, ModelConfig, Parameters, Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TRJL";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic {0:02x?}")]
    BadMagic(Vec<u8>),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated: needed {needed} bytes at offset {offset}, file has {len}")]
    Truncated { offset: usize, needed: usize, len: usize },
    #[error("checkpoint stores {found}-byte scalars, expected {expected}")]
    ScalarWidth { expected: usize, found: usize },
    #[error("tensor {index}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch { index: usize, expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint holds {found} tensors, expected {expected}")]
    TensorCount { expected: usize, found: usize },
    #[error("checkpoint config {found:?} differs from expected {expected:?}")]
    ConfigMismatch { expected: Box<ModelConfig>, found: Box<ModelConfig> },
    #[error("invalid config block: {0}")]
    BadConfig(String),
    #[error("{0} unexpected trailing bytes after checkpoint")]
    TrailingBytes(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Position of the data loader: per-epoch shuffles derive from `seed` and
/// `epoch`, `position` counts batches already consumed in that epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataCursor {
    pub seed: u64,
    pub epoch: u64,
    pub position: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord<T> {
    pub config: ModelConfig,
    pub step: u64,
    pub params: Parameters<T>,
    pub adam: Adam<T>,
    pub cursor: DataCursor,
}

impl<T: Scalar> CheckpointRecord<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::with_capacity(64 + 3 * self.params.n_params() * T::BYTES);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [c.n_layers, c.n_heads, c.d_model, c.d_ff, c.context_len, c.vocab_size] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&c.seed.to_le_bytes());
        out.extend_from_slice(&(T::BYTES as u32).to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        let tensors = self.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for set in [tensors, self.adam.m.tensors(), self.adam.v.tensors()] {
            for t in set {
                out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
                for &dim in &t.shape {
                    out.extend_from_slice(&(dim as u32).to_le_bytes());
                }
                for &x in &t.data {
                    x.write_le(&mut out);
                }
            }
        }
        for v in [self.cursor.seed, self.cursor.epoch, self.cursor.position] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic(magic.to_vec()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let mut dims = [0usize; 6];
        for d in dims.iter_mut() {
            *d = r.u32()? as usize;
        }
        let config = ModelConfig {
            n_layers: dims[0],
            n_heads: dims[1],
            d_model: dims[2],
            d_ff: dims[3],
            context_len: dims[4],
            vocab_size: dims[5],
            seed: r.u64()?,
        };
        config.validate().map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
        let width = r.u32()? as usize;
        if width != T::BYTES {
            return Err(CheckpointError::ScalarWidth { expected: T::BYTES, found: width });
        }
        let step = r.u64()?;
        // checked before building shapes, so a corrupted layer count cannot allocate
        let expected_tensors = config.n_layers.saturating_mul(12).saturating_add(5);
        let n_tensors = r.u32()? as usize;
        if n_tensors != expected_tensors {
            return Err(CheckpointError::TensorCount { expected: expected_tensors, found: n_tensors });
        }
        // every tensor needs a rank, a dim and one element in each of the three sets
        r.ensure(n_tensors.saturating_mul(3 * (8 + T::BYTES)))?;
        let shapes = Parameters::<T>::shapes(&config);
        let read_set = |r: &mut Reader| -> Result<Parameters<T>, CheckpointError> {
            let mut tensors = Vec::with_capacity(shapes.len());
            for (index, expected) in shapes.iter().enumerate() {
                let rank = r.u32()? as usize;
                // a corrupted rank must not trigger a huge allocation
                r.ensure(rank.saturating_mul(4))?;
                let found = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
                if &found != expected {
                    return Err(CheckpointError::ShapeMismatch { index, expected: expected.clone(), found });
                }
                let n = found.iter().try_fold(T::BYTES, |acc, &d| acc.checked_mul(d)).unwrap_or(usize::MAX);
                let raw = r.take(n)?;
                let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
                tensors.push(Tensor { shape: found, data });
            }
            Ok(Parameters::from_tensors(&config, tensors))
        };
        let params = read_set(&mut r)?;
        let m = read_set(&mut r)?;
        let v = read_set(&mut r)?;
        let cursor = DataCursor { seed: r.u64()?, epoch: r.u64()?, position: r.u64()? };
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(CheckpointRecord { config, step, params, adam: Adam { m, v, t: step }, cursor })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn ensure(&self, n: usize) -> Result<(), CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated { offset: self.pos, needed: n, len: self.bytes.len() });
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        self.ensure(n)?;
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Writes through a temporary file and a rename, so a crash never leaves a
/// half-written checkpoint under the final name.
pub fn save_checkpoint<T: Scalar>(record: &CheckpointRecord<T>, path: &Path) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, record.to_bytes())?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<CheckpointRecord<T>, CheckpointError> {
    CheckpointRecord::from_bytes(&std::fs::read(path)?)
}

/// Loads a checkpoint for a run that expects `expected`; differing tensor
/// shapes report a shape mismatch, other differences a config mismatch.
pub fn load_checkpoint_expecting<T: Scalar>(
    path: &Path,
    expected: &ModelConfig,
) -> Result<CheckpointRecord<T>, CheckpointError> {
    let record = load_checkpoint::<T>(path)?;
    let want = Parameters::<T>::shapes(expected);
    let have = Parameters::<T>::shapes(&record.config);
    if want.len() != have.len() {
        return Err(CheckpointError::TensorCount { expected: want.len(), found: have.len() });
    }
    for (index, (e, f)) in want.into_iter().zip(have).enumerate() {
        if e != f {
            return Err(CheckpointError::ShapeMismatch { index, expected: e, found: f });
        }
    }
    if &record.config != expected {
        return Err(CheckpointError::ConfigMismatch {
            expected: Box::new(expected.clone()),
            found: Box::new(record.config.clone()),
        });
    }
    Ok(record)
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("ckpt_{step:08}.trjl"))
}

/// Checkpoint steps present in `dir`, ascending.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<(u64, PathBuf)>, std::io::Error> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(step) = name.strip_prefix("ckpt_").and_then(|s| s.strip_suffix(".trjl")).and_then(|s| s.parse().ok()) {
            out.push((step, path));
        }
    }
    out.sort();
    Ok(out)
}
