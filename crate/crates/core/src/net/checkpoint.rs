//! Single-file weight archive.
//!
//! Layout: 8-byte magic, `u32` format version, `u32` header length, a JSON
//! header, then every parameter as little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, Network};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"FMDLCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub param_count: usize,
    /// Training epoch (1-based) the weights come from, if any.
    pub epoch: Option<usize>,
    pub val_auc: Option<f64>,
    /// Free-form stage tag such as `step1` or `step2`.
    pub stage: Option<String>,
}

pub fn save_checkpoint<T: Scalar>(path: &Path, model: &Model<T>, header: &CheckpointHeader) -> Result<()> {
    if header.param_count != model.params.len() || header.config != *model.config() {
        return Err(Error::Checkpoint("header does not describe the model".into()));
    }
    let json = serde_json::to_vec(header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * model.params.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in &model.params {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(Model<T>, CheckpointHeader)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    let network = Network::new(header.config.clone())?;
    if network.num_params() != header.param_count {
        return Err(bad("parameter count does not match configuration"));
    }
    let data = &bytes[16 + hlen..];
    if data.len() != 8 * header.param_count {
        return Err(bad("truncated weights"));
    }
    let params = data
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    Ok((Model { network, params }, header))
}
