//! Single-file persistence for a trained recognizer.
//!
//! One versioned binary holds the pipeline configuration, the class label
//! table, the eigenspace, and the classifier with its momentum state; the
//! eigenspace and classifier only work as a pair, so they travel together.
//! All numbers are little-endian, floats as raw f64 bits, which makes a
//! serialize, deserialize, serialize cycle byte-identical.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classifier::{MlpConfig, MlpModel};
use crate::config::{parse_config, ConfigError, PipelineConfig};
use crate::eigenspace::Eigenspace;

pub const FILE_MAGIC: [u8; 8] = *b"THFACEMF";
pub const FILE_VERSION: u32 = 1;

/// Upper bound on any stored count or dimension; rejects absurd headers
/// before they can drive huge allocations.
const MAX_DIM: usize = 100_000_000;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot {action} {path}: {reason}")]
    Io {
        action: &'static str,
        path: PathBuf,
        reason: String,
    },
    #[error("not a recognizer model file or incompatible version: {reason}")]
    VersionMismatch { reason: String },
    #[error("model file truncated: needs {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("model file malformed: {0}")]
    Malformed(String),
    #[error("embedded config: {0}")]
    Config(#[from] ConfigError),
}

/// A trained recognizer ready to save or run: the full pipeline settings it
/// was built with, one display name per class, and the fitted stages.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub config: PipelineConfig,
    pub labels: Vec<String>,
    pub eigenspace: Eigenspace,
    pub mlp: MlpModel,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for &v in vs {
        put_f64(out, v);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let left = self.bytes.len() - self.pos;
        if left < n {
            return Err(ModelError::Truncated {
                offset: self.pos,
                needed: n - left,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A stored count or dimension, bounded by `MAX_DIM`.
    fn dim(&mut self) -> Result<usize, ModelError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        let v = usize::try_from(v).map_err(|_| ModelError::Malformed("dimension overflow".into()))?;
        if v > MAX_DIM {
            return Err(ModelError::Malformed(format!("dimension {v} out of range")));
        }
        Ok(v)
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>, ModelError> {
        let total = n
            .checked_mul(8)
            .ok_or_else(|| ModelError::Malformed("dimension overflow".into()))?;
        let bytes = self.take(total)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&FILE_MAGIC);
        put_u32(&mut out, FILE_VERSION);

        let cfg_text = self.config.to_text();
        put_u32(&mut out, cfg_text.len() as u32);
        out.extend_from_slice(cfg_text.as_bytes());

        put_u32(&mut out, self.labels.len() as u32);
        for label in &self.labels {
            put_u32(&mut out, label.len() as u32);
            out.extend_from_slice(label.as_bytes());
        }

        put_u64(&mut out, self.eigenspace.dim() as u64);
        put_u64(&mut out, self.eigenspace.k() as u64);
        put_f64s(&mut out, self.eigenspace.mean());
        put_f64s(&mut out, self.eigenspace.eigenvalues());
        for col in self.eigenspace.basis() {
            put_f64s(&mut out, col);
        }

        let mc = self.mlp.config();
        put_u32(&mut out, mc.layer_sizes.len() as u32);
        for &s in &mc.layer_sizes {
            put_u64(&mut out, s as u64);
        }
        put_f64(&mut out, mc.learning_rate);
        put_f64(&mut out, mc.momentum);
        put_u64(&mut out, mc.max_epochs as u64);
        put_f64(&mut out, mc.target_loss);
        put_u64(&mut out, mc.seed);
        put_f64(&mut out, mc.init_scale);
        for l in 0..mc.layer_sizes.len() - 1 {
            for row in &self.mlp.weights[l] {
                put_f64s(&mut out, row);
            }
            put_f64s(&mut out, &self.mlp.biases[l]);
            for row in &self.mlp.w_velocity[l] {
                put_f64s(&mut out, row);
            }
            put_f64s(&mut out, &self.mlp.b_velocity[l]);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < FILE_MAGIC.len() {
            return Err(ModelError::VersionMismatch {
                reason: "file shorter than the magic header".into(),
            });
        }
        if bytes[..FILE_MAGIC.len()] != FILE_MAGIC {
            return Err(ModelError::VersionMismatch {
                reason: "bad magic bytes".into(),
            });
        }
        let mut r = Reader {
            bytes,
            pos: FILE_MAGIC.len(),
        };
        let version = r.u32()?;
        if version != FILE_VERSION {
            return Err(ModelError::VersionMismatch {
                reason: format!("format version {version}, this build reads {FILE_VERSION}"),
            });
        }

        let cfg_len = r.u32()? as usize;
        let cfg_text = std::str::from_utf8(r.take(cfg_len)?)
            .map_err(|_| ModelError::Malformed("config block is not UTF-8".into()))?;
        let config = parse_config(cfg_text)?;

        let n_labels = r.u32()? as usize;
        if n_labels > MAX_DIM {
            return Err(ModelError::Malformed("label count out of range".into()));
        }
        let mut labels = Vec::with_capacity(n_labels.min(1024));
        for _ in 0..n_labels {
            let len = r.u32()? as usize;
            let s = std::str::from_utf8(r.take(len)?)
                .map_err(|_| ModelError::Malformed("label is not UTF-8".into()))?;
            labels.push(s.to_string());
        }

        let d = r.dim()?;
        let k = r.dim()?;
        if k > d {
            return Err(ModelError::Malformed(format!(
                "eigenspace keeps {k} components in dimension {d}"
            )));
        }
        let mean = r.f64_vec(d)?;
        let eigenvalues = r.f64_vec(k)?;
        let mut basis = Vec::with_capacity(k);
        for _ in 0..k {
            basis.push(r.f64_vec(d)?);
        }
        let eigenspace = Eigenspace::from_parts(mean, basis, eigenvalues);

        let n_layers = r.u32()? as usize;
        if !(2..=64).contains(&n_layers) {
            return Err(ModelError::Malformed(format!(
                "classifier has {n_layers} layers"
            )));
        }
        let mut layer_sizes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let s = r.dim()?;
            if s == 0 {
                return Err(ModelError::Malformed("zero-width classifier layer".into()));
            }
            layer_sizes.push(s);
        }
        if layer_sizes[0] != k {
            return Err(ModelError::Malformed(format!(
                "classifier expects {} inputs but the eigenspace keeps {k}",
                layer_sizes[0]
            )));
        }
        if labels.len() != *layer_sizes.last().unwrap() {
            return Err(ModelError::Malformed(format!(
                "{} labels for {} output classes",
                labels.len(),
                layer_sizes.last().unwrap()
            )));
        }
        let learning_rate = r.f64()?;
        let momentum = r.f64()?;
        let max_epochs = r.dim()?;
        let target_loss = r.f64()?;
        let seed = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let init_scale = r.f64()?;
        for v in [learning_rate, momentum, target_loss, init_scale] {
            if !v.is_finite() {
                return Err(ModelError::Malformed(
                    "non-finite classifier hyperparameter".into(),
                ));
            }
        }

        let mut weights = Vec::with_capacity(n_layers - 1);
        let mut biases = Vec::with_capacity(n_layers - 1);
        let mut w_velocity = Vec::with_capacity(n_layers - 1);
        let mut b_velocity = Vec::with_capacity(n_layers - 1);
        for l in 0..n_layers - 1 {
            let (rows, cols) = (layer_sizes[l + 1], layer_sizes[l]);
            let mut w = Vec::with_capacity(rows);
            for _ in 0..rows {
                w.push(r.f64_vec(cols)?);
            }
            let b = r.f64_vec(rows)?;
            let mut wv = Vec::with_capacity(rows);
            for _ in 0..rows {
                wv.push(r.f64_vec(cols)?);
            }
            let bv = r.f64_vec(rows)?;
            weights.push(w);
            biases.push(b);
            w_velocity.push(wv);
            b_velocity.push(bv);
        }
        if r.pos != bytes.len() {
            return Err(ModelError::Malformed(format!(
                "{} trailing bytes after the classifier block",
                bytes.len() - r.pos
            )));
        }

        let mlp = MlpModel {
            config: MlpConfig {
                layer_sizes,
                learning_rate,
                momentum,
                max_epochs,
                target_loss,
                seed,
                init_scale,
            },
            weights,
            biases,
            w_velocity,
            b_velocity,
        };
        Ok(Self {
            config,
            labels,
            eigenspace,
            mlp,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        atomic_write(path, &self.to_bytes()).map_err(|e| ModelError::Io {
            action: "write",
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|e| ModelError::Io {
            action: "read",
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }
}

/// Writes to a fresh temp file in the target directory, then renames over
/// `path`, so a crashed run never leaves a truncated file behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
