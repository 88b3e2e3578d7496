//! Versioned, checksummed binary container for parameters and training
//! state.
//!
//! ```text
//! "HCCK" | u8 version | u32 header_len | header JSON
//! u32 n_tensors
//! per tensor: u16 name_len | name | u8 ndim | u32 dims.. | f32 LE values
//! u32 CRC32 of everything before it
//! ```
//!
//! All integers are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, Param};
use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HCCK";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub model: ModelConfig,
    /// Extra state (optimizer counters, RNG position) stored by the trainer.
    pub train: Option<serde_json::Value>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Container {
    pub fn from_model<S: Real>(model: &Model<S>, train: Option<serde_json::Value>) -> Self {
        Self {
            model: model.config().clone(),
            train,
            tensors: model.params().iter().map(|p| (p.name.clone(), p.value.cast())).collect(),
        }
    }

    /// The model parameters (tensors whose names match the model layout,
    /// in order, at the front of the container).
    pub fn model<S: Real>(&self) -> Result<Model<S>> {
        let n = super::param_specs(&self.model).len();
        if self.tensors.len() < n {
            return Err(Error::Corrupt(format!("container holds {} tensors, model needs {n}", self.tensors.len())));
        }
        let params = self.tensors[..n]
            .iter()
            .map(|(name, t)| Param { name: name.clone(), value: t.cast() })
            .collect();
        Model::from_params(self.model.clone(), params)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header { model: self.model.clone(), train: self.train.clone() })?;
        let mut b = Vec::new();
        b.extend_from_slice(CHECKPOINT_MAGIC);
        b.push(CHECKPOINT_VERSION);
        b.extend_from_slice(&(header.len() as u32).to_le_bytes());
        b.extend_from_slice(&header);
        b.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            let nb = name.as_bytes();
            let name_len = u16::try_from(nb.len()).map_err(|_| Error::invalid("tensor name too long"))?;
            b.extend_from_slice(&name_len.to_le_bytes());
            b.extend_from_slice(nb);
            b.push(t.ndim() as u8);
            for &d in t.shape() {
                b.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        Ok(b)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Corrupt("not a checkpoint (bad magic)".into()));
        }
        if bytes[4] != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { expected: CHECKPOINT_VERSION, found: bytes[4] });
        }
        if bytes.len() < 9 {
            return Err(Error::Corrupt("checkpoint truncated".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Corrupt(format!(
                "checkpoint checksum mismatch (stored {stored:#010x}, computed {computed:#010x}); file truncated or damaged"
            )));
        }
        let mut r = Reader { b: body, pos: 5 };
        let hlen = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(hlen)?)
            .map_err(|e| Error::Corrupt(format!("checkpoint header: {e}")))?;
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let nl = r.u16()? as usize;
            let name = String::from_utf8(r.take(nl)?.to_vec()).map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?;
            let ndim = r.take(1)?[0] as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            let data = r
                .take(count * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::Corrupt(format!("tensor {name}: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != body.len() {
            return Err(Error::Corrupt("trailing bytes after last tensor".into()));
        }
        Ok(Self { model: header.model, train: header.train, tensors })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.b.len()).ok_or_else(|| Error::Corrupt("checkpoint truncated".into()))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
