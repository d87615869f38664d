//! Dense `f64` tensors with reverse-mode differentiation, plus the
//! activations, losses, and optimizers the model is trained with.

mod activation;
pub mod gradcheck;
mod graph;
mod loss;
mod optim;
mod params;
mod tensor;

pub use activation::{ActivationKind, DEFAULT_ELU_ALPHA, DEFAULT_LEAKY_SLOPE, DEFAULT_PRELU_ALPHA};
pub use gradcheck::{
    check_inputs, check_params, compare, finite_difference_check, numeric_gradient,
    GradCheckOptions, GradCheckReport,
};
pub use graph::{sigmoid, Gradients, Graph, Var, NORM_EPSILON};
pub use loss::{LossKind, PROB_EPSILON};
pub use optim::{
    Optimizer, OptimizerKind, BETA1, BETA2, EPSILON as OPTIMIZER_EPSILON, RMSPROP_RHO,
};
pub use params::{Param, ParamId, ParamStore};
pub use tensor::Tensor;

use crate::error::Result;

/// Eager matrix product of two plain tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut g = Graph::eval();
    let (a, b) = (g.constant(a.clone())?, g.constant(b.clone())?);
    let c = g.matmul(a, b)?;
    Ok(g.value(c).clone())
}

pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let mut g = Graph::eval();
    let v = g.constant(x.clone())?;
    let s = g.softmax_rows(v)?;
    Ok(g.value(s).clone())
}

/// Applies an activation elementwise (PReLU at its initial slope).
pub fn apply_activation(kind: ActivationKind, x: &Tensor) -> Tensor {
    x.map(|v| kind.apply_scalar(v))
}

pub fn compute_loss(kind: LossKind, pred: &Tensor, target: &Tensor) -> Result<f64> {
    let mut g = Graph::eval();
    let p = g.constant(pred.clone())?;
    let l = g.loss(kind, p, target)?;
    Ok(g.value(l).item())
}

/// Inverted dropout on a plain tensor.
pub fn dropout(x: &Tensor, rate: f64, training: bool, rng_seed: u64) -> Result<Tensor> {
    let mut g = Graph::new(training);
    let v = g.constant(x.clone())?;
    let d = g.dropout(v, rate, rng_seed)?;
    Ok(g.value(d).clone())
}

/// Derives an independent sub-seed for a named subsystem from a master seed.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
