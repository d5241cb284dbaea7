//! Binary checkpoint format:
//!
//! ```text
//! b"DRUS" | u32 version | u64 header length | JSON header
//!        | f64 parameters (registry order) | f64 velocities | u32 CRC-32
//! ```
//!
//! All integers and floats are little-endian. The CRC covers every byte
//! before it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{count_params, ModelConfig, Network};
use crate::tensor::{RngState, Tensor};

pub const MAGIC: &[u8; 4] = b"DRUS";
pub const VERSION: u32 = 1;
const PREFIX: usize = 4 + 4 + 8;

/// Network parameters, optimizer state and training progress.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    /// Registry names, parallel to `params`.
    pub names: Vec<String>,
    pub params: Vec<Tensor>,
    pub velocities: Vec<Tensor>,
    pub epochs_completed: usize,
    /// `None` until a validation loss has been recorded.
    pub best_val_loss: Option<f64>,
    pub rng: RngState,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    epochs_completed: usize,
    best_val_loss: Option<f64>,
    rng: RngState,
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
}

impl Checkpoint {
    /// Snapshot of `net`'s parameter values and velocities.
    pub fn from_network(net: &Network, epochs_completed: usize, best_val_loss: Option<f64>, rng: RngState) -> Checkpoint {
        let params = net.params();
        Checkpoint {
            model: net.config().clone(),
            names: net.param_names(),
            params: params.iter().map(|p| p.value.clone()).collect(),
            velocities: params.iter().map(|p| p.velocity.clone()).collect(),
            epochs_completed,
            best_val_loss,
            rng,
        }
    }

    /// Rebuilds the network and loads parameters and velocities into it.
    pub fn to_network(&self) -> Result<Network> {
        let mut net = Network::new(&self.model, 0)?;
        self.restore_into(&mut net)?;
        Ok(net)
    }

    /// Copies parameters and velocities into an existing network of the same
    /// topology.
    pub fn restore_into(&self, net: &mut Network) -> Result<()> {
        if net.config() != &self.model {
            return Err(Error::Checkpoint("model configuration differs from the network's".into()));
        }
        if net.param_names() != self.names {
            return Err(Error::Checkpoint("parameter registry differs from the network's".into()));
        }
        let mut params = net.params_mut();
        if params.len() != self.params.len() || params.len() != self.velocities.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, network has {}",
                self.params.len(),
                params.len()
            )));
        }
        for ((p, v), vel) in params.iter_mut().zip(&self.params).zip(&self.velocities) {
            if p.value.shape() != v.shape() || p.value.shape() != vel.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor shape {:?} does not match network shape {:?}",
                    v.shape(),
                    p.value.shape()
                )));
            }
            p.value = v.clone();
            p.velocity = vel.clone();
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.model.clone(),
            epochs_completed: self.epochs_completed,
            best_val_loss: self.best_val_loss.filter(|v| v.is_finite()),
            rng: self.rng,
            names: self.names.clone(),
            shapes: self.params.iter().map(|t| t.shape().to_vec()).collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let floats = 2 * self.param_count();
        let mut out = Vec::with_capacity(PREFIX + json.len() + 8 * floats + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.iter().chain(&self.velocities) {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < PREFIX + 4 {
            return Err(Error::Truncated {
                expected: PREFIX + 4,
                found: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: VERSION,
            });
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header_end = PREFIX.saturating_add(header_len);
        if header_end.saturating_add(4) > bytes.len() {
            return Err(Error::Truncated {
                expected: header_end.saturating_add(4),
                found: bytes.len(),
            });
        }
        let header: Option<Header> = serde_json::from_slice(&bytes[PREFIX..header_end]).ok();
        if let Some(h) = &header {
            let floats: usize = h.shapes.iter().map(|s| s.iter().product::<usize>()).sum::<usize>() * 2;
            let expected = header_end + 8 * floats + 4;
            if bytes.len() < expected {
                return Err(Error::Truncated {
                    expected,
                    found: bytes.len(),
                });
            }
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        let header = header.ok_or_else(|| Error::Checkpoint("unreadable header".into()))?;

        let expected_count = count_params(&header.model)?;
        let mut floats = body[header_end..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut read = |shapes: &[Vec<usize>]| -> Result<Vec<Tensor>> {
            shapes
                .iter()
                .map(|s| Tensor::from_vec(s, floats.by_ref().take(s.iter().product()).collect()))
                .collect()
        };
        let params = read(&header.shapes)?;
        let velocities = read(&header.shapes)?;
        if floats.next().is_some() {
            return Err(Error::Checkpoint("trailing data after velocities".into()));
        }
        let ckpt = Checkpoint {
            model: header.model,
            names: header.names,
            params,
            velocities,
            epochs_completed: header.epochs_completed,
            best_val_loss: header.best_val_loss,
            rng: header.rng,
        };
        if ckpt.names.len() != ckpt.params.len() {
            return Err(Error::Checkpoint("header names and tensors disagree".into()));
        }
        if ckpt.param_count() != expected_count {
            return Err(Error::Checkpoint(format!(
                "{} parameters stored, model configuration has {expected_count}",
                ckpt.param_count()
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}
