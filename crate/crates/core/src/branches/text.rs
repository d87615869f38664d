use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{InnerKind, MultiHeadAttention};
use crate::config::ModelConfig;
use crate::ela::Ela;
use crate::encodings::{tape_pe, EncodingKind, PositionalEncodingSpec};
use crate::error::{Result, WetError};
use crate::layers::{Activation, LayerNorm, Linear};
use crate::numerics::{derive_seed, Graph, ParamId, ParamStore, Tensor, Var};

/// Token embeddings for one record. `pad_mask[i]` is true for padding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSequence {
    pub tokens: Tensor,
    pub pad_mask: Vec<bool>,
}

impl EmbeddedSequence {
    pub fn new(tokens: Tensor, pad_mask: Vec<bool>) -> Result<Self> {
        if tokens.ndim() != 2 || tokens.rows() != pad_mask.len() {
            return Err(WetError::dim(
                "EmbeddedSequence",
                format!(
                    "tokens {:?} vs mask of length {}",
                    tokens.shape(),
                    pad_mask.len()
                ),
            ));
        }
        Ok(EmbeddedSequence { tokens, pad_mask })
    }

    /// A sequence with no padding.
    pub fn unpadded(tokens: Tensor) -> Result<Self> {
        let n = if tokens.ndim() == 2 { tokens.rows() } else { 0 };
        Self::new(tokens, vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.pad_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pad_mask.is_empty()
    }

    pub fn valid_len(&self) -> usize {
        self.pad_mask.iter().filter(|&&p| !p).count()
    }

    /// Right-pads with zero rows up to `len`.
    pub fn padded_to(&self, len: usize) -> Result<Self> {
        if len < self.len() {
            return Err(WetError::invalid(format!(
                "cannot pad length {} down to {len}",
                self.len()
            )));
        }
        let d = self.tokens.cols();
        let mut data = self.tokens.data().to_vec();
        data.resize(len * d, 0.0);
        let mut mask = self.pad_mask.clone();
        mask.resize(len, true);
        Self::new(Tensor::new(&[len, d], data)?, mask)
    }
}

/// Post-norm transformer block: eRPE attention, ELA, residual and layer
/// norm, then a feed-forward sublayer with its own residual and norm.
#[derive(Debug, Clone)]
pub struct TextBlock {
    pub attention: MultiHeadAttention,
    pub ela: Ela,
    pub norm1: LayerNorm,
    pub ff1: Linear,
    pub act: Activation,
    pub ff2: Linear,
    pub norm2: LayerNorm,
    pub out: Option<Linear>,
}

impl TextBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cfg: &ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let d = cfg.d_model;
        let inner = InnerKind::Erpe {
            max_len: cfg.max_seq_len,
            placement: cfg.bias_placement,
        };
        Ok(TextBlock {
            attention: MultiHeadAttention::new(
                store,
                &format!("{name}.mha"),
                d,
                cfg.heads,
                inner,
                rng,
            )?,
            ela: Ela::new(
                store,
                &format!("{name}.ela"),
                d,
                cfg.ela_reduction,
                cfg.pooling,
                rng,
            )?,
            norm1: LayerNorm::new(store, &format!("{name}.ln1"), d),
            ff1: Linear::new(store, &format!("{name}.ff1"), d, 4 * d, rng),
            act: Activation::new(store, &format!("{name}.act"), cfg.activation),
            ff2: Linear::new(store, &format!("{name}.ff2"), 4 * d, d, rng),
            norm2: LayerNorm::new(store, &format!("{name}.ln2"), d),
            out: (cfg.d_repr != d)
                .then(|| Linear::new(store, &format!("{name}.proj"), d, cfg.d_repr, rng)),
        })
    }

    /// Per-token outputs `[L, d_model]`.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let a = self.attention.forward(g, store, x)?;
        let a = self.ela.forward_sequence(g, store, a)?;
        let h = g.add(x, a)?;
        let h1 = self.norm1.forward(g, store, h)?;
        let f = self.ff1.forward(g, store, h1)?;
        let f = self.act.forward(g, store, f)?;
        let f = self.ff2.forward(g, store, f)?;
        let h = g.add(h1, f)?;
        self.norm2.forward(g, store, h)
    }

    /// Mean-pooled representation `[1, d_repr]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.encode(g, store, x)?;
        let d = g.shape(h)[1];
        let pooled = g.mean_rows(h)?;
        let pooled = g.reshape(pooled, &[1, d])?;
        match &self.out {
            Some(p) => p.forward(g, store, pooled),
            None => Ok(pooled),
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.attention.param_ids();
        ids.extend(self.ela.param_ids());
        ids.extend(self.norm1.param_ids());
        ids.extend(self.ff1.param_ids());
        ids.extend(self.act.param_ids());
        ids.extend(self.ff2.param_ids());
        ids.extend(self.norm2.param_ids());
        if let Some(p) = &self.out {
            ids.extend(p.param_ids());
        }
        ids
    }
}

/// Shared embedding projection and tAPE, then `text_blocks` independently
/// initialised blocks, each yielding one representation.
#[derive(Debug, Clone)]
pub struct TextBranch {
    pub projection: Linear,
    pub blocks: Vec<TextBlock>,
    pub max_seq_len: usize,
    pub d_emb: usize,
    pub d_model: usize,
    pub pe_base: f64,
}

impl TextBranch {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "text.projection"));
        let projection = Linear::new(store, "text.projection", cfg.d_emb, cfg.d_model, &mut rng);
        let blocks = (0..cfg.text_blocks)
            .map(|j| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("text.block{j}")));
                TextBlock::new(store, &format!("text.block{j}"), cfg, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TextBranch {
            projection,
            blocks,
            max_seq_len: cfg.max_seq_len,
            d_emb: cfg.d_emb,
            d_model: cfg.d_model,
            pe_base: cfg.pe_base,
        })
    }

    /// Projected, position-encoded non-pad tokens `[L_valid, d_model]`.
    pub fn embed(&self, g: &mut Graph, store: &ParamStore, seq: &EmbeddedSequence) -> Result<Var> {
        if seq.len() > self.max_seq_len {
            return Err(WetError::invalid(format!(
                "sequence length {} exceeds max_seq_len {}",
                seq.len(),
                self.max_seq_len
            )));
        }
        if seq.tokens.cols() != self.d_emb {
            return Err(WetError::dim(
                "text_branch",
                format!("embedding width {} != {}", seq.tokens.cols(), self.d_emb),
            ));
        }
        let valid: Vec<usize> = (0..seq.len()).filter(|&i| !seq.pad_mask[i]).collect();
        if valid.is_empty() {
            return Err(WetError::invalid("sequence has no non-pad tokens"));
        }
        let tokens = g.constant(seq.tokens.clone())?;
        let tokens = if valid.len() == seq.len() {
            tokens
        } else {
            g.gather_rows(tokens, &valid)?
        };
        let x = self.projection.forward(g, store, tokens)?;
        let spec = PositionalEncodingSpec::new(EncodingKind::Tape, valid.len(), self.d_model)
            .with_base(self.pe_base);
        let pe = g.constant(tape_pe(&spec)?)?;
        g.add(x, pe)
    }

    /// One `[1, d_repr]` representation per block.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        seq: &EmbeddedSequence,
    ) -> Result<Vec<Var>> {
        let x = self.embed(g, store, seq)?;
        self.blocks.iter().map(|b| b.forward(g, store, x)).collect()
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.projection.param_ids();
        for b in &self.blocks {
            ids.extend(b.param_ids());
        }
        ids
    }
}
