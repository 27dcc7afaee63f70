//! Versioned binary checkpoint container.
//!
//! ```text
//! "HTCK"                        magic
//! u32 LE                        format version
//! u64 LE, bytes                 JSON metadata (configs, subtask, dev F1, step)
//! u32 LE                        tensor count
//! per tensor:
//!   u32 LE, bytes               name (UTF-8)
//!   u32 LE, u64 LE × ndim       shape
//!   f64 LE × product(shape)     values
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::Task;
use crate::model::{ModelConfig, ModelParams};
use crate::training::TrainConfig;

pub const MAGIC: &[u8; 4] = b"HTCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    /// Subtask whose dev F1 triggered the save; `None` for a plain snapshot.
    pub subtask: Option<Task>,
    pub dev_f1_macro: f64,
    pub step: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let out = &self.buf[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Checkpoint("truncated file".into())),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let tensors = self.params.tensors();
        let mut out = Vec::with_capacity(64 + meta.len() + tensors.iter().map(|t| t.data.len() * 8).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.meta.format_version.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for d in &t.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let meta_len = r.u64()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)?;
        let problems = meta.model.validate();
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }

        let mut params = ModelParams::zeros(&meta.model);
        let expected: Vec<(String, Vec<usize>)> =
            params.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {count}", expected.len())));
        }
        let mut slots = params.tensors_mut();
        for ((want_name, want_shape), (_, slot)) in expected.iter().zip(slots.iter_mut()) {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            if name != want_name {
                return Err(Error::Checkpoint(format!("expected tensor `{want_name}`, found `{name}`")));
            }
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if &shape != want_shape {
                return Err(Error::Checkpoint(format!("tensor `{name}` has shape {shape:?}, expected {want_shape:?}")));
            }
            let bytes = r.take(slot.len() * 8)?;
            for (v, chunk) in slot.iter_mut().zip(bytes.chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().unwrap());
            }
        }
        drop(slots);
        if r.pos != buf.len() {
            return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
        }
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
