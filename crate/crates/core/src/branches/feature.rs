use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lstm::Lstm;
use super::window::supervised_transform;
use crate::attention::{InnerKind, MultiHeadAttention, ProbSparseConfig};
use crate::config::{ModelConfig, FEATURE_COUNT};
use crate::ela::Ela;
use crate::encodings::feature_branch_pe;
use crate::error::{Result, WetError};
use crate::layers::Linear;
use crate::numerics::{derive_seed, ActivationKind, Graph, ParamId, ParamStore, Tensor, Var};

/// Inputs larger than this in magnitude are taken as unstandardised.
pub const FEATURE_MAGNITUDE_LIMIT: f64 = 50.0;

/// ProbSparse self-attention, then an LSTM over the attended sequence,
/// then ELU.
#[derive(Debug, Clone)]
pub struct FeatureEncoderLayer {
    pub attention: MultiHeadAttention,
    pub lstm: Lstm,
}

impl FeatureEncoderLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        heads: usize,
        sparse: ProbSparseConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(FeatureEncoderLayer {
            attention: MultiHeadAttention::new(
                store,
                &format!("{name}.mha"),
                d_model,
                heads,
                InnerKind::ProbSparse(sparse),
                rng,
            )?,
            lstm: Lstm::new(store, &format!("{name}.lstm"), d_model, d_model, rng),
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let a = self.attention.forward(g, store, x)?;
        let h = self.lstm.forward(g, store, a)?;
        g.activation(h, ActivationKind::elu())
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.attention.param_ids();
        ids.extend(self.lstm.param_ids());
        ids
    }
}

#[derive(Debug, Clone)]
pub struct FeatureBranch {
    pub embed: Lstm,
    pub ela: Ela,
    pub layers: Vec<FeatureEncoderLayer>,
    pub out: Option<Linear>,
    pub mask: [bool; FEATURE_COUNT],
    pub window: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub d_model: usize,
}

impl FeatureBranch {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "feature"));
        let d = cfg.d_model;
        let embed = Lstm::new(store, "feature.embed", 1, d, &mut rng);
        let ela = Ela::new(
            store,
            "feature.ela",
            d,
            cfg.ela_reduction,
            cfg.pooling,
            &mut rng,
        )?;
        let sparse = ProbSparseConfig {
            sampling_factor: cfg.sampling_factor,
        };
        let layers = (0..cfg.feature_layers)
            .map(|j| {
                FeatureEncoderLayer::new(
                    store,
                    &format!("feature.layer{j}"),
                    d,
                    cfg.heads,
                    sparse,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let out =
            (cfg.d_repr != d).then(|| Linear::new(store, "feature.proj", d, cfg.d_repr, &mut rng));
        Ok(FeatureBranch {
            embed,
            ela,
            layers,
            out,
            mask: cfg.feature_mask,
            window: cfg.feature_window,
            n_in: cfg.n_in,
            n_out: cfg.n_out,
            d_model: d,
        })
    }

    /// The masked feature vector arranged as a `[L_x, 1]` sequence.
    pub fn sequence(&self, features: &[f64]) -> Result<Tensor> {
        if features.len() != FEATURE_COUNT {
            return Err(WetError::dim(
                "feature_branch",
                format!("expected {FEATURE_COUNT} features, got {}", features.len()),
            ));
        }
        if let Some(x) = features
            .iter()
            .find(|x| !x.is_finite() || x.abs() > FEATURE_MAGNITUDE_LIMIT)
        {
            return Err(WetError::invalid(format!(
                "feature value {x} exceeds {FEATURE_MAGNITUDE_LIMIT}; inputs must be standardised"
            )));
        }
        let kept: Vec<f64> = features
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&x, _)| x)
            .collect();
        let record = Tensor::new(&[1, kept.len()], kept)?;
        let win = supervised_transform(&record, self.window, self.n_in, self.n_out)?;
        win.transformed.transpose()
    }

    /// Per-position encodings `[L_x, d_model]` after the encoder stack.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, features: &[f64]) -> Result<Var> {
        let seq = self.sequence(features)?;
        let len = seq.rows();
        let x = g.constant(seq)?;
        let x = self.embed.forward(g, store, x)?;
        let pe = g.constant(feature_branch_pe(len, self.d_model)?)?;
        let mut x = g.add(x, pe)?;
        x = self.ela.forward_sequence(g, store, x)?;
        for layer in &self.layers {
            x = layer.forward(g, store, x)?;
        }
        Ok(x)
    }

    /// Mean-pooled representation `[1, d_repr]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, features: &[f64]) -> Result<Var> {
        let x = self.encode(g, store, features)?;
        let pooled = g.mean_rows(x)?;
        let pooled = g.reshape(pooled, &[1, self.d_model])?;
        match &self.out {
            Some(p) => p.forward(g, store, pooled),
            None => Ok(pooled),
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.embed.param_ids();
        ids.extend(self.ela.param_ids());
        for l in &self.layers {
            ids.extend(l.param_ids());
        }
        if let Some(p) = &self.out {
            ids.extend(p.param_ids());
        }
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{multi_head, scaled_dot_attention, AttentionInputs, HeadProjections};

    fn cfg() -> ModelConfig {
        ModelConfig {
            d_model: 8,
            d_repr: 8,
            heads: 2,
            ela_reduction: 2,
            ..ModelConfig::default()
        }
    }

    const FV: [f64; 7] = [0.4, -0.2, -1.0, 0.3, 1.2, -0.7, 0.05];

    #[test]
    fn output_shape_and_determinism() {
        let mut store = ParamStore::new();
        let branch = FeatureBranch::new(&mut store, &cfg(), 5).unwrap();
        let mut g = Graph::eval();
        let a = branch.forward(&mut g, &store, &FV).unwrap();
        let b = branch.forward(&mut g, &store, &FV).unwrap();
        assert_eq!(g.shape(a), &[1, 8]);
        assert_eq!(g.value(a), g.value(b));
    }

    #[test]
    fn unstandardised_input_rejected() {
        let mut store = ParamStore::new();
        let branch = FeatureBranch::new(&mut store, &cfg(), 5).unwrap();
        let mut fv = FV;
        fv[3] = 1234.0;
        assert!(branch.forward(&mut Graph::eval(), &store, &fv).is_err());
    }

    #[test]
    fn mask_shortens_sequence() {
        let mut c = cfg();
        c.feature_mask[5] = false;
        c.feature_window = 6;
        let mut store = ParamStore::new();
        let branch = FeatureBranch::new(&mut store, &c, 5).unwrap();
        let seq = branch.sequence(&FV).unwrap();
        assert_eq!(seq.shape(), &[6, 1]);
        assert_eq!(seq.data(), &[0.4, -0.2, -1.0, 0.3, 1.2, 0.05]);
    }

    #[test]
    fn encoder_layer_preserves_shape() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer =
            FeatureEncoderLayer::new(&mut store, "l", 8, 2, ProbSparseConfig::default(), &mut rng)
                .unwrap();
        let mut g = Graph::eval();
        let x = g
            .constant(
                Tensor::new(&[4, 8], (0..32).map(|i| (i as f64 * 0.37).cos()).collect()).unwrap(),
            )
            .unwrap();
        let y = layer.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.shape(y), &[4, 8]);
    }

    #[test]
    fn short_sequence_attention_is_full() {
        // u = ceil(5 ln 4) >= 4, so the sparse sub-step equals dense attention
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layer =
            FeatureEncoderLayer::new(&mut store, "l", 8, 2, ProbSparseConfig::default(), &mut rng)
                .unwrap();
        let mut g = Graph::eval();
        let x = g
            .constant(
                Tensor::new(&[4, 8], (0..32).map(|i| (i as f64 * 0.61).sin()).collect()).unwrap(),
            )
            .unwrap();
        let sparse = layer.attention.forward(&mut g, &store, x).unwrap();
        let ids = layer.attention.param_ids();
        let p: Vec<Var> = ids.iter().map(|&id| g.param(&store, id)).collect();
        let proj = HeadProjections {
            wq: p[0],
            wk: p[1],
            wv: p[2],
            wo: p[3],
            bq: Some(p[4]),
            bk: Some(p[5]),
            bv: Some(p[6]),
            bo: Some(p[7]),
        };
        let dense = multi_head(
            &mut g,
            &AttentionInputs::new(x, x, x),
            2,
            &proj,
            |g, h, _| scaled_dot_attention(g, h),
        )
        .unwrap();
        assert!(g.value(sparse).max_abs_diff(g.value(dense)) < 1e-12);
    }
}
