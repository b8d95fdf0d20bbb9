//! `FCPEWT01` named-tensor archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0      8 bytes   magic "FCPEWT01"
//! 8      u32       header length H in bytes
//! 12     H bytes   UTF-8 JSON header
//! D      ...       payloads, D = first multiple of 64 at or after 12 + H
//! ```
//!
//! The header is `{"metadata": {key: value, ...}, "tensors": [{"name",
//! "dtype": "f32", "shape": [...], "offset", "nbytes"}, ...]}` with tensors
//! sorted by name. `offset` is relative to `D` and is a multiple of 64;
//! payloads are row-major f32 and gaps are zero-filled. Writing the same
//! archive twice yields identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FcpeError, Result};

pub const ARCHIVE_MAGIC: &[u8; 8] = b"FCPEWT01";
pub const PAYLOAD_ALIGN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(FcpeError::Shape(format!(
                "shape {shape:?} holds {n} values but {} were given",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorArchive {
    tensors: BTreeMap<String, Tensor>,
    metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    metadata: BTreeMap<String, String>,
    tensors: Vec<EntryHeader>,
}

#[derive(Serialize, Deserialize)]
struct EntryHeader {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
    nbytes: usize,
}

fn align(n: usize) -> usize {
    n.div_ceil(PAYLOAD_ALIGN) * PAYLOAD_ALIGN
}

fn format_err(message: impl Into<String>) -> FcpeError {
    FcpeError::Format {
        chunk: "FCPEWT01 header".into(),
        message: message.into(),
    }
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a tensor.
    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
        self.tensors.insert(name.into(), Tensor::new(shape, data)?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn extend_metadata(&mut self, entries: BTreeMap<String, String>) {
        self.metadata.extend(entries);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for (name, t) in &self.tensors {
            let nbytes = t.data.len() * 4;
            entries.push(EntryHeader {
                name: name.clone(),
                dtype: "f32".into(),
                shape: t.shape.clone(),
                offset,
                nbytes,
            });
            offset = align(offset + nbytes);
        }
        let header = serde_json::to_vec(&Header {
            metadata: self.metadata.clone(),
            tensors: entries,
        })
        .expect("archive header serializes");
        let data_start = align(12 + header.len());
        let mut out = Vec::with_capacity(data_start + offset);
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.resize(data_start, 0);
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.resize(data_start + align(out.len() - data_start), 0);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != ARCHIVE_MAGIC {
            return Err(format_err("missing FCPEWT01 magic"));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_bytes = bytes
            .get(12..12 + header_len)
            .ok_or_else(|| format_err("header extends past end of file"))?;
        let header: Header =
            serde_json::from_slice(header_bytes).map_err(|e| format_err(format!("invalid header JSON: {e}")))?;
        let data_start = align(12 + header_len);
        let mut tensors = BTreeMap::new();
        for e in header.tensors {
            if e.dtype != "f32" {
                return Err(format_err(format!(
                    "tensor {} has unsupported dtype {}",
                    e.name, e.dtype
                )));
            }
            let n: usize = e.shape.iter().product();
            if e.nbytes != 4 * n {
                return Err(format_err(format!(
                    "tensor {}: {} bytes do not match shape {:?}",
                    e.name, e.nbytes, e.shape
                )));
            }
            if e.offset % PAYLOAD_ALIGN != 0 {
                return Err(format_err(format!(
                    "tensor {} offset {} is not 64-byte aligned",
                    e.name, e.offset
                )));
            }
            let start = data_start + e.offset;
            let payload = bytes
                .get(start..start + e.nbytes)
                .ok_or_else(|| format_err(format!("tensor {} payload truncated", e.name)))?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if tensors
                .insert(e.name.clone(), Tensor { shape: e.shape, data })
                .is_some()
            {
                return Err(format_err(format!("duplicate tensor name {}", e.name)));
            }
        }
        Ok(Self {
            tensors,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| FcpeError::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| FcpeError::file(path, e))?;
        Self::from_bytes(&bytes)
    }
}
