//! Binary tensor container: magic bytes, a little-endian `u64` header
//! length, a JSON header (caller metadata plus a tensor directory) and the
//! concatenated little-endian `f32` tensor data.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::tensor::Tensor;

/// Magic bytes opening every container.
pub const MAGIC: &[u8; 6] = b"MSGAN1";

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not a tensor container (bad magic bytes)")]
    BadMagic,
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the data section.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    meta: Value,
    tensors: Vec<Entry>,
}

/// Metadata plus named tensors, kept in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub meta: Value,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Container {
    pub fn new(meta: Value) -> Self {
        Self { meta, tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.tensors.push((name.into(), t));
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let entries = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let e = Entry { name: name.clone(), shape: t.shape().to_vec(), offset };
                offset += t.len() * 4;
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header { meta: self.meta.clone(), tensors: entries })
            .expect("JSON values always serialize");
        let mut out = Vec::with_capacity(14 + header.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        if bytes.len() < 14 || &bytes[..6] != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let len = u64::from_le_bytes(bytes[6..14].try_into().expect("eight bytes")) as usize;
        let data_start = 14usize
            .checked_add(len)
            .filter(|e| *e <= bytes.len())
            .ok_or_else(|| ContainerError::Malformed("header length exceeds file".into()))?;
        let header: Header = serde_json::from_slice(&bytes[14..data_start])
            .map_err(|e| ContainerError::Malformed(format!("header: {e}")))?;
        let data = &bytes[data_start..];
        let mut expected = 0;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            if e.offset != expected || e.offset + n * 4 > data.len() {
                return Err(ContainerError::Malformed(format!("tensor {} has a bad offset", e.name)));
            }
            let values = data[e.offset..e.offset + n * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
                .collect();
            expected += n * 4;
            tensors.push((e.name, Tensor::new(e.shape, values)));
        }
        if expected != data.len() {
            return Err(ContainerError::Malformed("trailing bytes after tensor data".into()));
        }
        Ok(Self { meta: header.meta, tensors })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<f32>, ContainerError> {
        self.get(name).ok_or_else(|| ContainerError::MissingTensor(name.to_string()))
    }

    /// Tensors whose names start with `prefix`, with the prefix removed.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a Tensor<f32>)> + 'a {
        self.tensors.iter().filter_map(move |(n, t)| n.strip_prefix(prefix).map(|rest| (rest, t)))
    }
}
