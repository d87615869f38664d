use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::weights::{weighted_combine, EnsembleWeights};
use crate::branches::{EmbeddedSequence, FeatureBranch, TextBranch};
use crate::config::{ModelConfig, WeightsMode, FEATURE_COUNT};
use crate::error::{Result, WetError};
use crate::layers::{Activation, Linear};
use crate::numerics::{derive_seed, Graph, ParamId, ParamStore, Tensor, Var};

/// One model input: token embeddings plus the standardised feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub sequence: EmbeddedSequence,
    pub features: [f64; FEATURE_COUNT],
}

/// Per-branch classifier: FC, activation, dropout, FC to one logit, sigmoid.
#[derive(Debug, Clone)]
pub struct Head {
    pub fc: Linear,
    pub act: Activation,
    pub out: Linear,
}

impl Head {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cfg: &ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Head {
            fc: Linear::new(store, &format!("{name}.fc"), cfg.d_repr, cfg.fc_width, rng),
            act: Activation::new(store, &format!("{name}.act"), cfg.activation),
            out: Linear::new(store, &format!("{name}.out"), cfg.fc_width, 1, rng),
        }
    }

    /// Class-1 probability `[1, 1]` for a `[1, d_repr]` representation.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        rep: Var,
        dropout: f64,
        seed: u64,
    ) -> Result<Var> {
        let h = self.fc.forward(g, store, rep)?;
        let h = self.act.forward(g, store, h)?;
        let h = g.dropout(h, dropout, seed)?;
        let z = self.out.forward(g, store, h)?;
        g.sigmoid(z)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.fc.param_ids();
        ids.extend(self.act.param_ids());
        ids.extend(self.out.param_ids());
        ids
    }
}

/// Graph outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// One `[1, 1]` probability per branch, text blocks first.
    pub branch_probs: Vec<Var>,
    /// `[1, 1]` weighted combination.
    pub combined: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub branch_probs: Vec<f64>,
    /// Ensemble output, clamped to `[0, 1]` (only learned weights can leave it).
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct WetModel {
    pub config: ModelConfig,
    pub seed: u64,
    pub store: ParamStore,
    pub text: TextBranch,
    pub feature: FeatureBranch,
    pub heads: Vec<Head>,
    pub weights: EnsembleWeights,
    /// `[n+1, 1]` trainable weights in learned mode.
    pub learned: Option<ParamId>,
}

impl WetModel {
    pub fn new(config: ModelConfig, mode: WeightsMode, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let text = TextBranch::new(&mut store, &config, seed)?;
        let feature = FeatureBranch::new(&mut store, &config, seed)?;
        let n = config.text_blocks + 1;
        let heads = (0..n)
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("head{j}")));
                Head::new(&mut store, &format!("head{j}"), &config, &mut rng)
            })
            .collect();
        let mut weights = EnsembleWeights::uniform(n);
        weights.mode = mode;
        let learned = (mode == WeightsMode::Learned)
            .then(|| store.add_filled("ensemble.a", &[n, 1], 1.0 / n as f64));
        Ok(WetModel {
            config,
            seed,
            store,
            text,
            feature,
            heads,
            weights,
            learned,
        })
    }

    pub fn branch_count(&self) -> usize {
        self.heads.len()
    }

    pub fn branch_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.config.text_blocks)
            .map(|j| format!("text{j}"))
            .collect();
        names.push("feature".into());
        names
    }

    /// Every trainable parameter, in creation order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        self.store.ids().collect()
    }

    pub fn param_count(&self) -> usize {
        self.store.count(&self.param_ids())
    }

    /// Copies learned weights out of the store into `weights`.
    pub fn sync_weights(&mut self) {
        if let Some(id) = self.learned {
            self.weights.a = self.store.value(id).data().to_vec();
        }
    }

    /// Builds the forward pass. Dropout is active only in a training graph;
    /// `dropout_seed` keys its masks.
    pub fn forward(
        &self,
        g: &mut Graph,
        input: &ModelInput,
        dropout_seed: u64,
    ) -> Result<ForwardVars> {
        let mut reps = self.text.forward(g, &self.store, &input.sequence)?;
        reps.push(self.feature.forward(g, &self.store, &input.features)?);
        let mut branch_probs = Vec::with_capacity(reps.len());
        for (j, (rep, head)) in reps.into_iter().zip(&self.heads).enumerate() {
            let seed = dropout_seed
                .wrapping_add(j as u64)
                .wrapping_mul(0x9E37_79B9_7F4A_7C15);
            branch_probs.push(head.forward(g, &self.store, rep, self.config.dropout, seed)?);
        }
        let stacked = g.concat_cols(&branch_probs)?;
        let a = match self.learned {
            Some(id) => g.param(&self.store, id),
            None => {
                let n = self.weights.len();
                g.constant(Tensor::new(&[n, 1], self.weights.a.clone())?)?
            }
        };
        let combined = g.matmul(stacked, a)?;
        Ok(ForwardVars {
            branch_probs,
            combined,
        })
    }

    pub fn predict(&self, input: &ModelInput) -> Result<Prediction> {
        let mut g = Graph::eval();
        let out = self.forward(&mut g, input, 0)?;
        let branch_probs: Vec<f64> = out
            .branch_probs
            .iter()
            .map(|&p| g.value(p).item())
            .collect();
        let outputs: Vec<Vec<f64>> = branch_probs.iter().map(|&p| vec![p]).collect();
        let probability = weighted_combine(&outputs, &self.weights)?[0].clamp(0.0, 1.0);
        Ok(Prediction {
            branch_probs,
            probability,
        })
    }

    /// Replaces the ensemble weights; in learned mode the trainable copy too.
    pub fn set_weights(&mut self, weights: EnsembleWeights) -> Result<()> {
        if weights.len() != self.branch_count() {
            return Err(WetError::invalid(format!(
                "{} weights for {} branches",
                weights.len(),
                self.branch_count()
            )));
        }
        weights.validate()?;
        if let Some(id) = self.learned {
            *self.store.value_mut(id) = Tensor::new(&[weights.len(), 1], weights.a.clone())?;
        }
        self.weights = weights;
        Ok(())
    }
}
