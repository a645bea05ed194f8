//! Versioned binary checkpoints.
//!
//! Layout: the 4-byte magic `SACK`, a little-endian `u32` format version, a
//! little-endian `u64` header length, a UTF-8 JSON header (configs, epoch
//! counter, optimizer step, history) and then four little-endian `f32`
//! arrays of `n_params` values each: current parameters, Adam first moment,
//! Adam second moment, best-validation parameters.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::AdamState;
use super::train::{EpochRecord, TrainConfig, TrainState};
use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SACK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    model_config: ModelConfig,
    train_config: TrainConfig,
    n_params: usize,
    epoch: usize,
    adam_step: u64,
    best_val: Option<f64>,
    history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub state: TrainState,
}

fn push_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let state = &self.state;
        let header = Header {
            model_config: self.model_config.clone(),
            train_config: self.train_config.clone(),
            n_params: state.params.data.len(),
            epoch: state.epoch,
            adam_step: state.adam.step,
            best_val: state.best_val.is_finite().then_some(state.best_val),
            history: state.history.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut buf = Vec::with_capacity(16 + json.len() + 16 * header.n_params);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        push_f32s(&mut buf, &state.params.data);
        push_f32s(&mut buf, &state.adam.m);
        push_f32s(&mut buf, &state.adam.v);
        push_f32s(&mut buf, &state.best.data);
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Format {
            path: origin.to_path_buf(),
            reason,
        };
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(fail("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(fail(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() < header_len {
            return Err(fail("truncated header".into()));
        }
        let header: Header =
            serde_json::from_slice(&body[..header_len]).map_err(|e| fail(format!("header: {e}")))?;
        let arrays = &body[header_len..];
        let n = header.n_params;
        if arrays.len() != 16 * n {
            return Err(fail(format!(
                "expected {} parameter bytes, found {}",
                16 * n,
                arrays.len()
            )));
        }
        let read = |k: usize| -> Vec<f32> {
            arrays[4 * n * k..4 * n * (k + 1)]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        let params = ModelParams::from_flat(&header.model_config, read(0))?;
        let best = ModelParams::from_flat(&header.model_config, read(3))?;
        Ok(Self {
            model_config: header.model_config,
            train_config: header.train_config,
            state: TrainState {
                params,
                adam: AdamState {
                    m: read(1),
                    v: read(2),
                    step: header.adam_step,
                },
                best,
                best_val: header.best_val.unwrap_or(f64::INFINITY),
                epoch: header.epoch,
                history: header.history,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

/// Training history as CSV: `epoch,lr,train_loss,val_mean_px_error`.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,lr,train_loss,val_mean_px_error\n");
    for r in history {
        out.push_str(&format!(
            "{},{:e},{:.9},{:.6}\n",
            r.epoch, r.lr, r.train_loss, r.val_mean_px_error
        ));
    }
    out
}
