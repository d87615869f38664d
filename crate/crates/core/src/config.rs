//! Model, training and run configuration.
//!
//! `RunConfig` is the flat key/value form read from TOML files and
//! overridden by command-line flags; it splits into a [`ModelConfig`] and
//! a [`TrainConfig`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::BiasPlacement;
use crate::ela::PoolNormalization;
use crate::error::{Result, WetError};
use crate::numerics::{ActivationKind, LossKind, OptimizerKind};

/// Number of auxiliary per-record features.
pub const FEATURE_COUNT: usize = 7;

/// Names of the auxiliary features, in vector order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "subjectivity",
    "polarity",
    "sentiment",
    "followers",
    "likes",
    "replies",
    "retweets",
];

/// Largest dropout accepted while the grid guard is on.
pub const MAX_GRID_DROPOUT: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WeightsMode {
    Uniform,
    #[default]
    ValidationDerived,
    Learned,
}

impl WeightsMode {
    pub fn name(self) -> &'static str {
        match self {
            WeightsMode::Uniform => "uniform",
            WeightsMode::ValidationDerived => "valderived",
            WeightsMode::Learned => "learned",
        }
    }
}

impl FromStr for WeightsMode {
    type Err = WetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(WeightsMode::Uniform),
            "valderived" | "validation_derived" => Ok(WeightsMode::ValidationDerived),
            "learned" => Ok(WeightsMode::Learned),
            other => Err(WetError::Parse(format!(
                "unknown weights mode '{other}' (uniform|valderived|learned)"
            ))),
        }
    }
}

impl fmt::Display for WeightsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<String> for WeightsMode {
    type Error = WetError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WeightsMode> for String {
    fn from(m: WeightsMode) -> String {
        m.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProviderKind {
    #[default]
    PseudoHash,
    PrecomputedFile,
}

impl ProviderKind {
    pub fn name(self) -> &'static str {
        match self {
            ProviderKind::PseudoHash => "pseudo",
            ProviderKind::PrecomputedFile => "file",
        }
    }
}

impl FromStr for ProviderKind {
    type Err = WetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pseudo" | "pseudohash" => Ok(ProviderKind::PseudoHash),
            "file" | "precomputed" => Ok(ProviderKind::PrecomputedFile),
            other => Err(WetError::Parse(format!(
                "unknown embedding provider '{other}' (pseudo|file)"
            ))),
        }
    }
}

impl TryFrom<String> for ProviderKind {
    type Error = WetError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ProviderKind> for String {
    fn from(p: ProviderKind) -> String {
        p.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub d_model: usize,
    pub d_repr: usize,
    pub heads: usize,
    pub text_blocks: usize,
    pub max_seq_len: usize,
    pub ela_reduction: usize,
    pub pe_base: f64,
    pub pooling: PoolNormalization,
    pub bias_placement: BiasPlacement,
    pub feature_layers: usize,
    pub sampling_factor: f64,
    pub feature_window: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub feature_mask: [bool; FEATURE_COUNT],
    pub activation: ActivationKind,
    pub fc_width: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_emb: 32,
            d_model: 32,
            d_repr: 32,
            heads: 4,
            text_blocks: 4,
            max_seq_len: 64,
            ela_reduction: 4,
            pe_base: 1000.0,
            pooling: PoolNormalization::CrossDimension,
            bias_placement: BiasPlacement::PostSoftmax,
            feature_layers: 2,
            sampling_factor: 5.0,
            feature_window: FEATURE_COUNT,
            n_in: 1,
            n_out: 0,
            feature_mask: [true; FEATURE_COUNT],
            activation: ActivationKind::leaky_relu(),
            fc_width: 64,
            dropout: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn enabled_features(&self) -> usize {
        self.feature_mask.iter().filter(|&&m| m).count()
    }

    /// Length of the feature sequence after the lag/forecast transform.
    pub fn feature_seq_len(&self) -> usize {
        self.feature_window * (self.n_in + self.n_out)
    }

    pub fn errors(&self) -> Vec<String> {
        let mut e = Vec::new();
        for (name, v) in [
            ("d_emb", self.d_emb),
            ("d_model", self.d_model),
            ("d_repr", self.d_repr),
            ("heads", self.heads),
            ("text_blocks", self.text_blocks),
            ("max_seq_len", self.max_seq_len),
            ("ela_reduction", self.ela_reduction),
            ("feature_window", self.feature_window),
            ("fc_width", self.fc_width),
        ] {
            if v == 0 {
                e.push(format!("{name} must be at least 1"));
            }
        }
        if !self.d_model.is_multiple_of(2) {
            e.push(format!("d_model must be even, got {}", self.d_model));
        }
        if self.heads > 0 && !self.d_model.is_multiple_of(self.heads) {
            e.push(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            ));
        }
        if self.ela_reduction > 0 && !self.d_model.is_multiple_of(self.ela_reduction) {
            e.push(format!(
                "d_model {} is not divisible by ela_reduction {}",
                self.d_model, self.ela_reduction
            ));
        }
        if !(self.pe_base > 0.0 && self.pe_base.is_finite()) {
            e.push(format!("pe_base must be positive, got {}", self.pe_base));
        }
        if !(self.sampling_factor > 0.0 && self.sampling_factor.is_finite()) {
            e.push(format!(
                "sampling_factor must be positive, got {}",
                self.sampling_factor
            ));
        }
        if self.n_in + self.n_out == 0 {
            e.push("n_in + n_out must be at least 1".into());
        }
        if self.enabled_features() == 0 {
            e.push("feature_mask disables every feature".into());
        }
        if self.feature_seq_len() > self.enabled_features() {
            e.push(format!(
                "feature_window {} x (n_in + n_out) {} exceeds the {} enabled features",
                self.feature_window,
                self.n_in + self.n_out,
                self.enabled_features()
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            e.push(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        e
    }

    pub fn validate(&self) -> Result<()> {
        collect(self.errors())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub weights_mode: WeightsMode,
    pub temperature: f64,
    pub val_fraction: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            max_epochs: 200,
            patience: 10,
            min_delta: 1e-4,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            loss: LossKind::BinaryCrossentropy,
            weights_mode: WeightsMode::ValidationDerived,
            temperature: 0.1,
            val_fraction: 0.1,
            threshold: 0.5,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn errors(&self) -> Vec<String> {
        let mut e = Vec::new();
        if self.batch_size == 0 {
            e.push("batch_size must be at least 1".into());
        }
        if self.max_epochs == 0 {
            e.push("max_epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            e.push(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.min_delta >= 0.0) {
            e.push(format!(
                "min_delta must be nonnegative, got {}",
                self.min_delta
            ));
        }
        if !(self.temperature > 0.0) {
            e.push(format!(
                "temperature must be positive, got {}",
                self.temperature
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            e.push(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            e.push(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            ));
        }
        e
    }

    pub fn validate(&self) -> Result<()> {
        collect(self.errors())
    }
}

fn collect(errors: Vec<String>) -> Result<()> {
    if errors.is_empty() {
        Ok(())
    } else {
        Err(WetError::Validation(errors.join("; ")))
    }
}

/// Flat run configuration. Every key is optional in files; missing keys
/// take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out: PathBuf,
    pub provider: ProviderKind,
    pub split_ratio: f64,
    pub kfold: usize,
    pub grid_guard: bool,

    pub d_emb: usize,
    pub d_model: usize,
    pub d_repr: usize,
    pub heads: usize,
    pub text_blocks: usize,
    pub max_seq_len: usize,
    pub ela_reduction: usize,
    pub pe_base: f64,
    pub corrected_mean: bool,
    pub bias_pre_softmax: bool,
    pub feature_layers: usize,
    pub sampling_factor: f64,
    pub feature_window: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub feature_mask: [bool; FEATURE_COUNT],
    pub activation: ActivationKind,
    pub fc_width: usize,
    pub dropout: f64,

    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub weights_mode: WeightsMode,
    pub temperature: f64,
    pub val_fraction: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_parts(&ModelConfig::default(), &TrainConfig::default())
    }
}

impl RunConfig {
    pub fn from_parts(m: &ModelConfig, t: &TrainConfig) -> Self {
        RunConfig {
            input: None,
            keywords: None,
            lexicon: None,
            stopwords: None,
            embeddings: None,
            out: PathBuf::from("wet-out"),
            provider: ProviderKind::PseudoHash,
            split_ratio: 0.8,
            kfold: 5,
            grid_guard: true,
            d_emb: m.d_emb,
            d_model: m.d_model,
            d_repr: m.d_repr,
            heads: m.heads,
            text_blocks: m.text_blocks,
            max_seq_len: m.max_seq_len,
            ela_reduction: m.ela_reduction,
            pe_base: m.pe_base,
            corrected_mean: m.pooling == PoolNormalization::CorrectedMean,
            bias_pre_softmax: m.bias_placement == BiasPlacement::PreSoftmax,
            feature_layers: m.feature_layers,
            sampling_factor: m.sampling_factor,
            feature_window: m.feature_window,
            n_in: m.n_in,
            n_out: m.n_out,
            feature_mask: m.feature_mask,
            activation: m.activation,
            fc_width: m.fc_width,
            dropout: m.dropout,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            min_delta: t.min_delta,
            learning_rate: t.learning_rate,
            optimizer: t.optimizer,
            loss: t.loss,
            weights_mode: t.weights_mode,
            temperature: t.temperature,
            val_fraction: t.val_fraction,
            threshold: t.threshold,
            seed: t.seed,
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            d_emb: self.d_emb,
            d_model: self.d_model,
            d_repr: self.d_repr,
            heads: self.heads,
            text_blocks: self.text_blocks,
            max_seq_len: self.max_seq_len,
            ela_reduction: self.ela_reduction,
            pe_base: self.pe_base,
            pooling: if self.corrected_mean {
                PoolNormalization::CorrectedMean
            } else {
                PoolNormalization::CrossDimension
            },
            bias_placement: if self.bias_pre_softmax {
                BiasPlacement::PreSoftmax
            } else {
                BiasPlacement::PostSoftmax
            },
            feature_layers: self.feature_layers,
            sampling_factor: self.sampling_factor,
            feature_window: self.feature_window,
            n_in: self.n_in,
            n_out: self.n_out,
            feature_mask: self.feature_mask,
            activation: self.activation,
            fc_width: self.fc_width,
            dropout: self.dropout,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            min_delta: self.min_delta,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            loss: self.loss,
            weights_mode: self.weights_mode,
            temperature: self.temperature,
            val_fraction: self.val_fraction,
            threshold: self.threshold,
            seed: self.seed,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| WetError::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| WetError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| WetError::Internal(format!("config serialisation: {e}")))
    }

    /// Collects every problem before failing.
    pub fn validate(&self) -> Result<()> {
        let mut e = self.model().errors();
        e.extend(self.train().errors());
        if self.grid_guard && self.dropout > MAX_GRID_DROPOUT {
            e.push(format!(
                "dropout {} is above the grid bound {MAX_GRID_DROPOUT} (set grid_guard = false to allow)",
                self.dropout
            ));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            e.push(format!(
                "split_ratio must be in (0, 1), got {}",
                self.split_ratio
            ));
        }
        if self.kfold < 2 {
            e.push(format!("kfold must be at least 2, got {}", self.kfold));
        }
        if self.provider == ProviderKind::PrecomputedFile && self.embeddings.is_none() {
            e.push("provider 'file' needs an embeddings path".into());
        }
        collect(e)
    }
}
