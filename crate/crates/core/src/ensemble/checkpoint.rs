//! JSON checkpoints. Tensor data is stored as base64 of little-endian
//! `f64` bytes so that a save/load cycle is bit-exact.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::model::WetModel;
use super::weights::EnsembleWeights;
use crate::config::ModelConfig;
use crate::error::{Result, WetError};
use crate::numerics::Tensor;

pub const CHECKPOINT_FORMAT: &str = "wet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: ModelConfig,
    pub weights: EnsembleWeights,
    pub params: Vec<StoredTensor>,
}

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| WetError::Parse(format!("tensor data: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(WetError::Parse(format!(
            "tensor data has {} bytes, not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl Checkpoint {
    pub fn from_model(model: &WetModel) -> Self {
        let params = model
            .store
            .iter()
            .map(|(_, p)| StoredTensor {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                data: encode_f64s(p.value.data()),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed: model.seed,
            config: model.config.clone(),
            weights: model.weights.clone(),
            params,
        }
    }

    /// Rebuilds the architecture from the stored config and seed, then
    /// overwrites every parameter by name.
    pub fn into_model(self) -> Result<WetModel> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(WetError::Parse(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let mut model = WetModel::new(self.config, self.weights.mode, self.seed)?;
        if self.params.len() != model.store.len() {
            return Err(WetError::Parse(format!(
                "checkpoint has {} tensors, architecture expects {}",
                self.params.len(),
                model.store.len()
            )));
        }
        for stored in self.params {
            let id = model.store.find(&stored.name).ok_or_else(|| {
                WetError::Lookup(format!("checkpoint tensor '{}' not in model", stored.name))
            })?;
            let value = Tensor::new(&stored.shape, decode_f64s(&stored.data)?)?;
            if value.shape() != model.store.value(id).shape() {
                return Err(WetError::Parse(format!(
                    "tensor '{}' has shape {:?}, expected {:?}",
                    stored.name,
                    value.shape(),
                    model.store.value(id).shape()
                )));
            }
            *model.store.value_mut(id) = value;
        }
        model.set_weights(self.weights)?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| WetError::Internal(format!("checkpoint serialisation: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| WetError::Parse(format!("checkpoint: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| WetError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| WetError::io(path, e))?;
        Self::from_json(&text)
    }
}
