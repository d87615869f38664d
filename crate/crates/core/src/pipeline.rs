//! Self-contained model bundles: a checkpoint plus everything needed to
//! turn a raw record into model input.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ProviderKind, RunConfig};
use crate::dataprep::{
    extract_features, EmbeddingProvider, Lexicon, PrecomputedEmbeddings, PseudoHash,
    StandardizationStats, TweetRecord,
};
use crate::ensemble::{Checkpoint, ModelInput, Prediction, WetModel};
use crate::error::{Result, WetError};
use crate::numerics::derive_seed;

pub const BUNDLE_FORMAT: &str = "wet-bundle";

/// Feature extraction state fixed at preparation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub lexicon: Lexicon,
    pub stats: StandardizationStats,
    pub stopwords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSettings {
    pub provider: ProviderKind,
    pub dim: usize,
    pub seed: u64,
    pub path: Option<PathBuf>,
}

impl EmbeddingSettings {
    pub fn from_config(cfg: &RunConfig) -> Self {
        EmbeddingSettings {
            provider: cfg.provider,
            dim: cfg.d_emb,
            seed: derive_seed(cfg.seed, "embedding"),
            path: cfg.embeddings.clone(),
        }
    }

    pub fn build(&self) -> Result<EmbeddingProvider> {
        match self.provider {
            ProviderKind::PseudoHash => Ok(EmbeddingProvider::PseudoHash(PseudoHash::new(
                self.dim, self.seed,
            ))),
            ProviderKind::PrecomputedFile => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| WetError::invalid("file provider needs an embeddings path"))?;
                let e = PrecomputedEmbeddings::load(path)?;
                if e.dim != self.dim {
                    return Err(WetError::invalid(format!(
                        "embedding file has width {}, model expects {}",
                        e.dim, self.dim
                    )));
                }
                Ok(EmbeddingProvider::Precomputed(e))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub threshold: f64,
    pub preprocess: Preprocessor,
    pub embedding: EmbeddingSettings,
    pub checkpoint: Checkpoint,
}

impl ModelBundle {
    pub fn new(
        model: &WetModel,
        preprocess: Preprocessor,
        embedding: EmbeddingSettings,
        threshold: f64,
    ) -> Self {
        ModelBundle {
            format: BUNDLE_FORMAT.into(),
            threshold,
            preprocess,
            embedding,
            checkpoint: Checkpoint::from_model(model),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| WetError::Internal(format!("bundle serialisation: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| WetError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| WetError::io(path, e))?;
        let b: ModelBundle = serde_json::from_str(&text)
            .map_err(|e| WetError::Parse(format!("model bundle: {e}")))?;
        if b.format != BUNDLE_FORMAT {
            return Err(WetError::Parse(format!(
                "unexpected bundle format '{}'",
                b.format
            )));
        }
        Ok(b)
    }

    pub fn into_predictor(self) -> Result<Predictor> {
        let provider = self.embedding.build()?;
        Ok(Predictor {
            model: self.checkpoint.into_model()?,
            preprocess: self.preprocess,
            provider,
            threshold: self.threshold,
        })
    }
}

/// Scores raw records with a loaded model.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub model: WetModel,
    pub preprocess: Preprocessor,
    pub provider: EmbeddingProvider,
    pub threshold: f64,
}

impl Predictor {
    pub fn load(path: &Path) -> Result<Self> {
        ModelBundle::load(path)?.into_predictor()
    }

    pub fn input(&self, record: &TweetRecord) -> Result<ModelInput> {
        record.validate()?;
        let p = &self.preprocess;
        let sequence = self.provider.embed(
            &record.id,
            &record.text,
            &p.stopwords,
            self.model.config.max_seq_len,
        )?;
        let features = extract_features(record, &p.lexicon, &p.stats).to_array();
        Ok(ModelInput { sequence, features })
    }

    pub fn predict(&self, record: &TweetRecord) -> Result<Prediction> {
        self.model.predict(&self.input(record)?)
    }

    /// Scores bare text and counts under a synthetic id.
    pub fn predict_text(&self, text: &str, counts: [u64; 4]) -> Result<Prediction> {
        let record = TweetRecord {
            id: "input".into(),
            text: text.into(),
            followers: counts[0],
            likes: counts[1],
            replies: counts[2],
            retweets: counts[3],
            created_at: String::new(),
            label: None,
        };
        self.predict(&record)
    }

    pub fn is_positive(&self, p: &Prediction) -> bool {
        p.probability >= self.threshold
    }
}
