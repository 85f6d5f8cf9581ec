//! Parameter checkpoints: a binary blob of named little-endian f32 tensors
//! plus a JSON manifest carrying the blob hash and training metadata.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use super::NdError;
use crate::util::sha256_hex;

const MAGIC: &[u8; 4] = b"RGCK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub blob_sha256: String,
    pub tensors: Vec<TensorEntry>,
    pub config_hash: String,
    pub metadata: serde_json::Value,
}

pub fn encode_params(store: &ParamStore<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NdError> {
        if self.pos + n > self.buf.len() {
            return Err(NdError::Checkpoint("truncated blob".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NdError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_params(buf: &[u8]) -> Result<ParamStore<f32>, NdError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NdError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NdError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| NdError::Checkpoint("tensor name is not UTF-8".into()))?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let data = r
            .take(n * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        store.insert(name, Tensor::new(&shape, data)?);
    }
    if r.pos != buf.len() {
        return Err(NdError::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(store)
}

/// Write `params.bin` and `params.json` into `dir`.
pub fn save_checkpoint(
    dir: &Path,
    store: &ParamStore<f32>,
    config_hash: &str,
    metadata: serde_json::Value,
) -> Result<CheckpointManifest, NdError> {
    fs::create_dir_all(dir)?;
    let blob = encode_params(store);
    let manifest = CheckpointManifest {
        format_version: VERSION,
        blob_sha256: sha256_hex(&blob),
        tensors: store
            .iter()
            .map(|(k, v)| TensorEntry {
                name: k.clone(),
                shape: v.shape().to_vec(),
            })
            .collect(),
        config_hash: config_hash.to_string(),
        metadata,
    };
    fs::write(dir.join("params.bin"), &blob)?;
    fs::write(
        dir.join("params.json"),
        serde_json::to_vec_pretty(&manifest).map_err(|e| NdError::Checkpoint(e.to_string()))?,
    )?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(ParamStore<f32>, CheckpointManifest), NdError> {
    let blob = fs::read(dir.join("params.bin"))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(dir.join("params.json"))?)
        .map_err(|e| NdError::Checkpoint(e.to_string()))?;
    if sha256_hex(&blob) != manifest.blob_sha256 {
        return Err(NdError::Checkpoint("blob hash does not match manifest".into()));
    }
    Ok((decode_params(&blob)?, manifest))
}
