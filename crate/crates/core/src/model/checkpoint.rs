//! Single-file checkpoints: a JSON header describing the model configuration and
//! every named tensor, followed by the raw little-endian `f64` values.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, header, tensor
//! data in header order, then (optionally) Adam first and second moments for every
//! tensor in the same order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{Model, ModelConfig};
use super::optim::Adam;
use super::params::Params;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;

const MAGIC: &[u8; 8] = b"FSPANCKP";
const VERSION: u32 = 1;

/// Training bookkeeping stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckpointMeta {
    /// Number of completed epochs.
    pub epoch: usize,
    pub val_eer: Option<f64>,
    pub val_loss: Option<f64>,
    /// Front end the model was trained on.
    pub feature: Option<FeatureConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamHeader {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    meta: CheckpointMeta,
    tensors: Vec<TensorHeader>,
    optimizer: Option<AdamHeader>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
    pub optimizer: Option<Adam>,
}

fn write_f64s(w: &mut impl Write, v: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 8);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated tensor data: {e}")))?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

impl Checkpoint {
    pub fn to_writer(&self, mut w: impl Write) -> Result<()> {
        let p = self.model.params();
        let header = Header {
            config: self.model.config().clone(),
            meta: self.meta.clone(),
            tensors: p
                .ids()
                .map(|id| TensorHeader {
                    name: p.name(id).to_string(),
                    shape: p.shape(id).to_vec(),
                    trainable: p.is_trainable(id),
                })
                .collect(),
            optimizer: self.optimizer.as_ref().map(|a| AdamHeader {
                lr: a.lr,
                beta1: a.beta1,
                beta2: a.beta2,
                eps: a.eps,
                weight_decay: a.weight_decay,
                step: a.step,
            }),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for id in p.ids() {
            write_f64s(&mut w, p.value(id))?;
        }
        if let Some(a) = &self.optimizer {
            for m in &a.m {
                write_f64s(&mut w, m)?;
            }
            for v in &a.v {
                write_f64s(&mut w, v)?;
            }
        }
        Ok(())
    }

    /// Read a checkpoint, rebuilding the model from the stored configuration and
    /// rejecting any tensor whose name or shape does not match it.
    pub fn from_reader(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Checkpoint("file too short".into()))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let len = u64::from_le_bytes(b8) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|_| Error::Checkpoint("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let mut model = Model::new(header.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut loaded = Params::default();
        for t in &header.tensors {
            if loaded.id(&t.name).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor {}", t.name)));
            }
            let n = t.shape.iter().product();
            let values = read_f64s(&mut r, n)?;
            loaded.add(t.name.clone(), t.shape.clone(), values, t.trainable);
        }
        model.set_params(loaded)?;
        let optimizer = match header.optimizer {
            None => None,
            Some(h) => {
                let p = model.params();
                let mut adam = Adam::new(p, h.lr, h.weight_decay);
                adam.beta1 = h.beta1;
                adam.beta2 = h.beta2;
                adam.eps = h.eps;
                adam.step = h.step;
                // moments are stored in header order, which set_params verified equals ours
                for t in header.tensors.iter() {
                    let id = p.id(&t.name).expect("verified");
                    adam.m[id.0] = read_f64s(&mut r, p.value(id).len())?;
                }
                for t in header.tensors.iter() {
                    let id = p.id(&t.name).expect("verified");
                    adam.v[id.0] = read_f64s(&mut r, p.value(id).len())?;
                }
                Some(adam)
            }
        };
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        if !model.params().all_finite() {
            return Err(Error::Checkpoint("non-finite parameter values".into()));
        }
        Ok(Self {
            model,
            meta: header.meta,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_reader(&bytes[..])
    }
}

/// Hex SHA-256 of a file's bytes; identifies the checkpoint behind a score file.
pub fn file_hash(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
