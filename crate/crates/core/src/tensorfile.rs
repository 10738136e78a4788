//! Binary container shared by segment caches, feature caches and model
//! checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MPSZ"                magic
//! u16                   format version (1)
//! u8                    dtype tag (1 = f64)
//! u32, bytes            metadata length, UTF-8 JSON object
//! u32                   tensor count
//! per tensor:
//!   u16, bytes          name length, UTF-8 name
//!   u8                  rank
//!   u64 × rank          dims
//!   f64 × Π dims        payload
//! [u8; 32]              SHA-256 of every preceding byte
//! ```

use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::neural::Tensor;

pub const MAGIC: &[u8; 4] = b"MPSZ";
pub const VERSION: u16 = 1;
pub const DTYPE_F64: u8 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum TensorFileError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a tensor file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("unsupported dtype tag {0}")]
    Dtype(u8),
    #[error("checksum mismatch")]
    Checksum,
    #[error("file truncated or malformed at byte {0}")]
    Truncated(usize),
    #[error("bad metadata: {0}")]
    Meta(String),
    #[error("missing tensor '{0}'")]
    Missing(String),
    #[error("tensor '{name}': expected shape {expected:?}, found {found:?}")]
    Shape { name: String, expected: Vec<usize>, found: Vec<usize> },
}

/// Metadata plus an ordered list of named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    pub meta: Map<String, Value>,
    pub tensors: Vec<(String, Tensor)>,
}

impl TensorFile {
    pub fn new(meta: Map<String, Value>) -> Self {
        TensorFile { meta, tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, TensorFileError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| TensorFileError::Missing(name.to_string()))
    }

    pub fn get_shaped(&self, name: &str, shape: &[usize]) -> Result<&Tensor, TensorFileError> {
        let t = self.get(name)?;
        if t.shape != shape {
            return Err(TensorFileError::Shape { name: name.into(), expected: shape.to_vec(), found: t.shape.clone() });
        }
        Ok(t)
    }

    pub fn meta_str(&self, key: &str) -> Option<&str> {
        self.meta.get(key).and_then(Value::as_str)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("JSON map serializes");
        let payload: usize = self.tensors.iter().map(|(n, t)| 2 + n.len() + 1 + 8 * t.shape.len() + 8 * t.len()).sum();
        let mut out = Vec::with_capacity(4 + 2 + 1 + 4 + meta.len() + 4 + payload + CHECKSUM_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(DTYPE_F64);
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorFileError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(TensorFileError::BadMagic);
        }
        if bytes.len() < 4 + 2 + 1 + 4 + 4 + CHECKSUM_LEN {
            return Err(TensorFileError::Truncated(bytes.len()));
        }
        let (body, sum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != sum {
            return Err(TensorFileError::Checksum);
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(TensorFileError::Version(version));
        }
        let dtype = r.take(1)?[0];
        if dtype != DTYPE_F64 {
            return Err(TensorFileError::Dtype(dtype));
        }
        let meta_len = r.u32()? as usize;
        let meta: Value =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| TensorFileError::Meta(e.to_string()))?;
        let Value::Object(meta) = meta else {
            return Err(TensorFileError::Meta("metadata is not a JSON object".into()));
        };
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| TensorFileError::Truncated(at))?.to_string();
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize);
            }
            let at = r.pos;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or(TensorFileError::Truncated(at))?;
            let raw = r.take(n.checked_mul(8).ok_or(TensorFileError::Truncated(at))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((name, Tensor { shape, data }));
        }
        if r.pos != body.len() {
            return Err(TensorFileError::Truncated(r.pos));
        }
        Ok(TensorFile { meta, tensors })
    }

    /// Writes atomically: a temporary sibling is renamed over `path`.
    pub fn write(&self, path: &Path) -> Result<(), TensorFileError> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, TensorFileError> {
        let bytes =
            std::fs::read(path).map_err(|source| TensorFileError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorFileError> {
        let end =
            self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(TensorFileError::Truncated(self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TensorFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Hex SHA-256 of the JSON form of a configuration value.
pub fn config_hash<T: serde::Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configuration serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write-temp-then-rename so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TensorFileError> {
    let io = |source| TensorFileError::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(io)
}
