//! Small parameterised building blocks shared by the branches and heads.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{ActivationKind, Graph, ParamId, ParamStore, Var};

/// Row-vector affine map `x W + b` with `W: [d_in, d_out]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), d_in, d_out, rng);
        let bias = store.add_filled(format!("{name}.bias"), &[d_out], 0.0);
        Linear {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }
}

/// An activation, owning a learnable slope when it is PReLU.
#[derive(Debug, Clone, Copy)]
pub struct Activation {
    pub kind: ActivationKind,
    slope: Option<ParamId>,
}

impl Activation {
    pub fn new(store: &mut ParamStore, name: &str, kind: ActivationKind) -> Self {
        let slope = match kind {
            ActivationKind::PReLU { alpha } => {
                Some(store.add_filled(format!("{name}.prelu_alpha"), &[1], alpha))
            }
            _ => None,
        };
        Activation { kind, slope }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        match self.slope {
            Some(id) => {
                let s = g.param(store, id);
                g.prelu(x, s)
            }
            None => g.activation(x, self.kind),
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.slope.into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        LayerNorm {
            gamma: store.add_filled(format!("{name}.gamma"), &[width], 1.0),
            beta: store.add_filled(format!("{name}.beta"), &[width], 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.layer_norm(x, gamma, beta)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.gamma, self.beta]
    }
}
