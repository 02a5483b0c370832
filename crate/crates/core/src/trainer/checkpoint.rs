//! Single-file checkpoint container.
//!
//! ```text
//! b"DMRMCKPT"
//! u32 LE  container version (1)
//! u32 LE  manifest length, then that many bytes of UTF-8 JSON
//! u32 LE  number of arrays
//! per array:
//!   u32 LE name length, name bytes (UTF-8)
//!   u32 LE rows, u32 LE cols
//!   rows·cols × f64 LE, row-major
//! ```
//!
//! Arrays are written in parameter-creation order. Loading rebuilds the
//! model from the manifest and then overwrites every array by name, so a
//! missing, extra or mis-shaped array is an error.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{Dmrm, ModelConfig};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DMRMCKPT";
pub const CONTAINER_VERSION: u32 = 1;
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub step: usize,
    pub vocab_fingerprint: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub model: Dmrm,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

impl Checkpoint {
    pub fn new(model: Dmrm, train: TrainConfig, vocab: &Vocabulary, step: usize) -> Self {
        Self {
            manifest: Manifest {
                schema_version: SCHEMA_VERSION,
                step,
                vocab_fingerprint: vocab.fingerprint(),
                model: model.config.clone(),
                train,
            },
            model,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        let store = &self.model.store;
        out.extend_from_slice(&(store.len() as u32).to_le_bytes());
        for (_, name, t) in store.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("missing DMRMCKPT magic".into()));
        }
        let version = r.u32()?;
        if version != CONTAINER_VERSION as usize {
            return Err(Error::Checkpoint(format!("unsupported container version {version}")));
        }
        let mlen = r.u32()?;
        let manifest: Manifest = serde_json::from_slice(r.take(mlen)?)?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported schema version {}",
                manifest.schema_version
            )));
        }
        let mut model = Dmrm::new(manifest.model.clone(), manifest.train.seed)?;
        let count = r.u32()?;
        if count != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "{count} arrays stored, model has {}",
                model.store.len()
            )));
        }
        for _ in 0..count {
            let nlen = r.u32()?;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| Error::Checkpoint("array name is not UTF-8".into()))?
                .to_owned();
            let (rows, cols) = (r.u32()?, r.u32()?);
            let data = r
                .take(8 * rows * cols)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let id = model
                .store
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown array {name}")))?;
            let slot = model.store.get_mut(id);
            if slot.shape() != (rows, cols) {
                return Err(Error::Checkpoint(format!(
                    "array {name} is {rows}x{cols}, model expects {:?}",
                    slot.shape()
                )));
            }
            *slot = Tensor::from_vec(rows, cols, data)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after arrays".into()));
        }
        Ok(Self { manifest, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Fails unless `vocab` is the vocabulary the model was trained with.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let found = vocab.fingerprint();
        if found != self.manifest.vocab_fingerprint {
            return Err(Error::VocabMismatch {
                expected: self.manifest.vocab_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }
}
