//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `OMNISEG1`, a little-endian `u32` header length,
//! a JSON header, then every parameter as little-endian `f32` in registration
//! order. The header records the class and scale orderings the controller was
//! trained with, the model configuration, a tensor index and a SHA-256 digest
//! of the data section.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{OmniError, Result};
use crate::io;
use crate::model::{ModelConfig, OmniSeg};
use crate::nn::ParamStore;
use crate::task::{class_order, scale_order};

pub const MAGIC: &[u8; 8] = b"OMNISEG1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the data section, in `f32` elements.
    pub offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub class_order: Vec<String>,
    pub scale_order: Vec<String>,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    pub sha256: String,
    /// Free-form metadata such as the training configuration.
    #[serde(default)]
    pub meta: serde_json::Value,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn corrupt(msg: impl Into<String>) -> OmniError {
    OmniError::Checkpoint(msg.into())
}

pub fn encode(model: &OmniSeg<f32>, meta: serde_json::Value) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(model.params.scalar_count() * 4);
    let mut tensors = Vec::with_capacity(model.params.len());
    let mut offset = 0;
    for p in model.params.iter() {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            offset,
        });
        offset += p.data.len();
        for v in &p.data {
            data.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        version: FORMAT_VERSION,
        class_order: class_order(),
        scale_order: scale_order(),
        config: model.config.clone(),
        tensors,
        sha256: hex(&Sha256::digest(&data)),
        meta,
    };
    let json = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
    let len = u32::try_from(json.len()).map_err(|_| corrupt("header too large"))?;
    let mut out = Vec::with_capacity(12 + json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    Ok(out)
}

/// Parse and verify a checkpoint. Any structural problem, digest mismatch or
/// ordering mismatch is reported as [`OmniError::Checkpoint`].
pub fn decode(bytes: &[u8]) -> Result<(OmniSeg<f32>, Header)> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() < len {
        return Err(corrupt("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..len])
        .map_err(|e| corrupt(format!("unreadable header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported version {}", header.version)));
    }
    if header.class_order != class_order() || header.scale_order != scale_order() {
        return Err(corrupt("class or scale ordering differs from this build"));
    }
    let data = &body[len..];
    if hex(&Sha256::digest(data)) != header.sha256 {
        return Err(corrupt("data digest mismatch"));
    }
    if !data.len().is_multiple_of(4) {
        return Err(corrupt("data section is not a whole number of f32 values"));
    }
    let floats: Vec<f32> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let mut store = ParamStore::new();
    let mut expected_offset = 0;
    for t in &header.tensors {
        let n: usize = t.shape.iter().product();
        if t.offset != expected_offset || t.offset + n > floats.len() {
            return Err(corrupt(format!("tensor {} out of range", t.name)));
        }
        store.add(
            t.name.clone(),
            t.shape.clone(),
            floats[t.offset..t.offset + n].to_vec(),
        );
        expected_offset += n;
    }
    if expected_offset != floats.len() {
        return Err(corrupt("trailing data after last tensor"));
    }
    let model = OmniSeg::from_params(header.config.clone(), store)?;
    Ok((model, header))
}

pub fn save(path: &Path, model: &OmniSeg<f32>, meta: serde_json::Value) -> Result<()> {
    let bytes = encode(model, meta)?;
    io::ensure_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| OmniError::io(path, e))
}

pub fn load(path: &Path) -> Result<(OmniSeg<f32>, Header)> {
    let bytes = std::fs::read(path).map_err(|e| OmniError::io(path, e))?;
    decode(&bytes)
}
