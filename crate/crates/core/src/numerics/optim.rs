use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Result, WetError};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;
pub const RMSPROP_RHO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OptimizerKind {
    Adam,
    Nadam,
    Sgd,
    RmsProp,
}

impl OptimizerKind {
    pub fn all() -> [OptimizerKind; 4] {
        [
            OptimizerKind::Adam,
            OptimizerKind::Nadam,
            OptimizerKind::Sgd,
            OptimizerKind::RmsProp,
        ]
    }
}

/// Optimizer state for a fixed set of parameters.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    step_count: u64,
    first: Vec<Option<Tensor>>,
    second: Vec<Option<Tensor>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Optimizer {
            kind,
            learning_rate,
            step_count: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to every parameter in `ids`. Each must carry a gradient.
    pub fn step(&mut self, store: &mut ParamStore, ids: &[ParamId]) -> Result<()> {
        if let Some(&missing) = ids.iter().find(|&&id| store.grad(id).is_none()) {
            return Err(WetError::invalid(format!(
                "parameter '{}' has no gradient",
                store.get(missing).name
            )));
        }
        if self.first.len() < store.len() {
            self.first.resize(store.len(), None);
            self.second.resize(store.len(), None);
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let lr = self.learning_rate;
        for &id in ids {
            let param = store.get_mut(id);
            let grad = param.grad.as_ref().expect("checked above").data().to_vec();
            let shape = param.value.shape().to_vec();
            let values = param.value.data_mut();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (v, g) in values.iter_mut().zip(&grad) {
                        *v -= lr * g;
                    }
                }
                OptimizerKind::RmsProp => {
                    let sq = self.second[id.index()]
                        .get_or_insert_with(|| Tensor::zeros(&shape))
                        .data_mut();
                    for k in 0..grad.len() {
                        sq[k] = RMSPROP_RHO * sq[k] + (1.0 - RMSPROP_RHO) * grad[k] * grad[k];
                        values[k] -= lr * grad[k] / (sq[k].sqrt() + EPSILON);
                    }
                }
                OptimizerKind::Adam | OptimizerKind::Nadam => {
                    let m = self.first[id.index()]
                        .get_or_insert_with(|| Tensor::zeros(&shape))
                        .data_mut();
                    let v = self.second[id.index()]
                        .get_or_insert_with(|| Tensor::zeros(&shape))
                        .data_mut();
                    let c1 = 1.0 - BETA1.powi(t);
                    let c2 = 1.0 - BETA2.powi(t);
                    for k in 0..grad.len() {
                        m[k] = BETA1 * m[k] + (1.0 - BETA1) * grad[k];
                        v[k] = BETA2 * v[k] + (1.0 - BETA2) * grad[k] * grad[k];
                        let v_hat = v[k] / c2;
                        let m_hat = if self.kind == OptimizerKind::Nadam {
                            // Nesterov look-ahead on the bias-corrected first moment
                            BETA1 * m[k] / (1.0 - BETA1.powi(t + 1)) + (1.0 - BETA1) * grad[k] / c1
                        } else {
                            m[k] / c1
                        };
                        values[k] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
                    }
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Nadam => "nadam",
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::RmsProp => "rmsprop",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = WetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "nadam" => Ok(OptimizerKind::Nadam),
            "sgd" => Ok(OptimizerKind::Sgd),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            other => Err(WetError::invalid(format!("unknown optimizer '{other}'"))),
        }
    }
}

impl TryFrom<String> for OptimizerKind {
    type Error = WetError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<OptimizerKind> for String {
    fn from(value: OptimizerKind) -> Self {
        value.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(kind: OptimizerKind, lr: f64, value: f64, grad: f64) -> (f64, u64) {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::scalar(value));
        store.accumulate_one(id, &Tensor::scalar(grad)).unwrap();
        let mut opt = Optimizer::new(kind, lr);
        opt.step(&mut store, &[id]).unwrap();
        (store.value(id).item(), opt.step_count())
    }

    #[test]
    fn sgd_rule() {
        let (v, steps) = single(OptimizerKind::Sgd, 0.1, 1.0, 1.0);
        assert!((v - 0.9).abs() < 1e-15);
        assert_eq!(steps, 1);
        assert_eq!(single(OptimizerKind::Sgd, 0.1, 1.0, 0.0).0, 1.0);
    }

    #[test]
    fn adaptive_first_step_moves_against_gradient() {
        for kind in [
            OptimizerKind::Adam,
            OptimizerKind::Nadam,
            OptimizerKind::RmsProp,
        ] {
            for g in [-3.0, -1e-3, 0.5, 7.0] {
                let (v, _) = single(kind, 1e-2, 0.0, g);
                assert_eq!(v.signum(), -g.signum(), "{kind} grad {g}");
            }
        }
        // bias-corrected Adam takes a step of ~lr regardless of gradient scale
        let (v, _) = single(OptimizerKind::Adam, 1e-2, 0.0, 123.0);
        assert!((v + 1e-2).abs() < 1e-9);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::scalar(1.0));
        let mut opt = Optimizer::new(OptimizerKind::Adam, 1e-3);
        assert!(matches!(
            opt.step(&mut store, &[id]),
            Err(WetError::Validation(_))
        ));
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn step_count_increments_once_per_step() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::zeros(&[3]));
        let b = store.add("b", Tensor::zeros(&[2, 2]));
        let mut opt = Optimizer::new(OptimizerKind::Nadam, 1e-3);
        for k in 1..=4 {
            store.accumulate_one(a, &Tensor::ones(&[3])).unwrap();
            store.accumulate_one(b, &Tensor::ones(&[2, 2])).unwrap();
            opt.step(&mut store, &[a, b]).unwrap();
            store.zero_grad();
            assert_eq!(opt.step_count(), k);
        }
    }
}
