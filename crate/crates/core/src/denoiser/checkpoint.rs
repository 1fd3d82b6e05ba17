//! Checkpoint files.
//!
//! Layout: the 8 magic bytes `FNDF0001`, a little-endian `u64` header length,
//! the JSON header, then the payload. Model parameters are stored as
//! little-endian `f32` in manifest order. An optional list of `f64` tensors
//! (optimizer state, full-precision weights) follows so training can resume
//! exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Denoiser, DenoiserConfig, DenoiserParams};
use crate::adcore::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FNDF0001";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Optimizer steps taken when the checkpoint was written.
    pub step: u64,
    /// Hash of the run configuration that produced the checkpoint.
    pub run_config_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Denoiser,
    pub meta: CheckpointMeta,
    /// Full-precision extras, stored verbatim.
    pub extra: Vec<(String, Tensor)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: DenoiserConfig,
    config_hash: String,
    meta: CheckpointMeta,
    tensors: Vec<Entry>,
    extra: Vec<Entry>,
}

fn bad(path: &Path, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let entry = |name: &str, t: &Tensor, wide: bool, payload: &mut Vec<u8>| {
        let e = Entry {
            name: name.to_owned(),
            shape: t.shape().to_vec(),
            dtype: if wide { "f64" } else { "f32" }.into(),
            offset: payload.len() as u64,
        };
        for v in t.data() {
            if wide {
                payload.extend_from_slice(&v.to_le_bytes());
            } else {
                payload.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        e
    };
    let p = ckpt.model.params();
    let tensors: Vec<Entry> = p
        .names()
        .iter()
        .zip(p.tensors())
        .map(|(n, t)| entry(n, t, false, &mut payload))
        .collect();
    let extra: Vec<Entry> = ckpt.extra.iter().map(|(n, t)| entry(n, t, true, &mut payload)).collect();
    let header = Header {
        config: ckpt.model.config().clone(),
        config_hash: ckpt.model.config().hash(),
        meta: ckpt.meta.clone(),
        tensors,
        extra,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Writes via a temporary file and rename so readers never see a partial file.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(ckpt)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint. With `expected`, the stored architecture must match
/// it exactly.
pub fn load_checkpoint(path: &Path, expected: Option<&DenoiserConfig>) -> Result<Checkpoint> {
    // An unreadable checkpoint is a checkpoint failure, not a generic I/O error.
    let bytes = std::fs::read(path).map_err(|e| bad(path, format!("cannot read: {e}")))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad(path, "not a checkpoint (bad magic)"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16usize.saturating_add(hlen)).ok_or_else(|| bad(path, "truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(path, format!("header: {e}")))?;
    if header.config.hash() != header.config_hash {
        return Err(bad(path, "config hash does not match the stored config"));
    }
    if let Some(exp) = expected {
        if exp.hash() != header.config_hash {
            return Err(bad(
                path,
                format!(
                    "model config mismatch: checkpoint {} vs requested {}",
                    serde_json::to_string(&header.config)?,
                    serde_json::to_string(exp)?
                ),
            ));
        }
    }
    let payload = &bytes[16 + hlen..];
    let read = |e: &Entry| -> Result<Tensor> {
        let n: usize = e.shape.iter().product();
        let width = match e.dtype.as_str() {
            "f32" => 4,
            "f64" => 8,
            other => return Err(bad(path, format!("unknown dtype {other} for {}", e.name))),
        };
        let start = e.offset as usize;
        let raw = payload
            .get(start..start + n * width)
            .ok_or_else(|| bad(path, format!("payload truncated in {}", e.name)))?;
        let data = raw
            .chunks_exact(width)
            .map(|c| {
                if width == 4 {
                    f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64
                } else {
                    f64::from_le_bytes(c.try_into().expect("8 bytes"))
                }
            })
            .collect();
        Tensor::new(e.shape.clone(), data)
    };
    let names = header.tensors.iter().map(|e| e.name.clone()).collect();
    let tensors = header.tensors.iter().map(&read).collect::<Result<Vec<_>>>()?;
    let params = DenoiserParams::from_parts(names, tensors)?;
    let model = Denoiser::from_params(header.config, params).map_err(|e| bad(path, e.to_string()))?;
    let extra = header
        .extra
        .iter()
        .map(|e| Ok((e.name.clone(), read(e)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Checkpoint {
        model,
        meta: header.meta,
        extra,
    })
}
