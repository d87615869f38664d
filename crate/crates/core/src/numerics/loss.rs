use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WetError};

/// Probability clamp used by the cross-entropy losses.
pub const PROB_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LossKind {
    BinaryCrossentropy,
    CategoricalCrossentropy,
    MeanSquaredError,
    MeanAbsoluteError,
    MeanSquaredLogarithmicError,
}

impl LossKind {
    pub fn all() -> [LossKind; 5] {
        [
            LossKind::BinaryCrossentropy,
            LossKind::CategoricalCrossentropy,
            LossKind::MeanSquaredError,
            LossKind::MeanAbsoluteError,
            LossKind::MeanSquaredLogarithmicError,
        ]
    }

    /// Mean loss over all elements and its gradient with respect to `pred`.
    ///
    /// Categorical cross-entropy treats a trailing dimension of 1 as the
    /// positive-class probability of a two-class distribution `[1-p, p]`;
    /// wider rows are taken as full class distributions.
    pub fn value_and_grad(
        &self,
        pred: &[f64],
        target: &[f64],
        row_len: usize,
    ) -> Result<(f64, Vec<f64>)> {
        if pred.len() != target.len() || pred.is_empty() {
            return Err(WetError::dim(
                "compute_loss",
                format!(
                    "prediction has {} values, target {}",
                    pred.len(),
                    target.len()
                ),
            ));
        }
        let n = pred.len() as f64;
        let mut grad = vec![0.0; pred.len()];
        let mut total = 0.0;
        match self {
            LossKind::BinaryCrossentropy => {
                check_binary(target)?;
                for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
                    let (l, d) = bce(p, t);
                    total += l;
                    grad[i] = d / n;
                }
            }
            LossKind::CategoricalCrossentropy if row_len == 1 => {
                check_binary(target)?;
                for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
                    let (l, d) = bce(p, t);
                    total += l;
                    grad[i] = d / n;
                }
            }
            LossKind::CategoricalCrossentropy => {
                let rows = pred.len() / row_len;
                for i in 0..pred.len() {
                    let p = pred[i];
                    let clamped = p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
                    total += -target[i] * clamped.ln();
                    if p == clamped {
                        grad[i] = -target[i] / clamped / rows as f64;
                    }
                }
                return Ok((total / rows as f64, grad));
            }
            LossKind::MeanSquaredError => {
                for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
                    total += (p - t) * (p - t);
                    grad[i] = 2.0 * (p - t) / n;
                }
            }
            LossKind::MeanAbsoluteError => {
                for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
                    total += (p - t).abs();
                    grad[i] = if p > t {
                        1.0 / n
                    } else if p < t {
                        -1.0 / n
                    } else {
                        0.0
                    };
                }
            }
            LossKind::MeanSquaredLogarithmicError => {
                for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
                    // log1p is undefined below -1; clamp both sides at zero like keras
                    let pc = p.max(0.0);
                    let tc = t.max(0.0);
                    let diff = pc.ln_1p() - tc.ln_1p();
                    total += diff * diff;
                    if p >= 0.0 {
                        grad[i] = 2.0 * diff / (1.0 + pc) / n;
                    }
                }
            }
        }
        Ok((total / n, grad))
    }
}

fn check_binary(target: &[f64]) -> Result<()> {
    if let Some(t) = target.iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(WetError::invalid(format!(
            "binary cross-entropy target {t} is not 0 or 1"
        )));
    }
    Ok(())
}

fn bce(p: f64, t: f64) -> (f64, f64) {
    let c = p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
    let loss = -(t * c.ln() + (1.0 - t) * (1.0 - c).ln());
    let grad = if c == p {
        -t / c + (1.0 - t) / (1.0 - c)
    } else {
        0.0
    };
    (loss, grad)
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::BinaryCrossentropy => "binary_crossentropy",
            LossKind::CategoricalCrossentropy => "categorical_crossentropy",
            LossKind::MeanSquaredError => "mse",
            LossKind::MeanAbsoluteError => "mae",
            LossKind::MeanSquaredLogarithmicError => "msle",
        })
    }
}

impl FromStr for LossKind {
    type Err = WetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "binary_crossentropy" | "bce" => Ok(LossKind::BinaryCrossentropy),
            "categorical_crossentropy" | "cce" => Ok(LossKind::CategoricalCrossentropy),
            "mse" | "mean_squared_error" => Ok(LossKind::MeanSquaredError),
            "mae" | "mean_absolute_error" => Ok(LossKind::MeanAbsoluteError),
            "msle" | "mean_squared_logarithmic_error" => Ok(LossKind::MeanSquaredLogarithmicError),
            other => Err(WetError::invalid(format!("unknown loss '{other}'"))),
        }
    }
}

impl TryFrom<String> for LossKind {
    type Error = WetError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<LossKind> for String {
    fn from(value: LossKind) -> Self {
        value.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(kind: LossKind, p: &[f64], t: &[f64]) -> f64 {
        kind.value_and_grad(p, t, 1).unwrap().0
    }

    #[test]
    fn spot_values() {
        assert!((value(LossKind::MeanSquaredError, &[0.5], &[0.0]) - 0.25).abs() < 1e-15);
        assert!((value(LossKind::MeanAbsoluteError, &[0.5], &[0.0]) - 0.5).abs() < 1e-15);
        // exact match is clamped away from log(0)
        let l = value(LossKind::BinaryCrossentropy, &[1.0, 0.0], &[1.0, 0.0]);
        assert!((0.0..1e-6).contains(&l));
        let msle = value(LossKind::MeanSquaredLogarithmicError, &[1.0], &[0.0]);
        assert!((msle - 2f64.ln().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn bce_rejects_soft_targets() {
        assert!(LossKind::BinaryCrossentropy
            .value_and_grad(&[0.3], &[0.5], 1)
            .is_err());
    }

    #[test]
    fn categorical_on_single_output_matches_binary() {
        let p = [0.2, 0.7, 0.9];
        let t = [0.0, 1.0, 1.0];
        let a = LossKind::BinaryCrossentropy
            .value_and_grad(&p, &t, 1)
            .unwrap();
        let b = LossKind::CategoricalCrossentropy
            .value_and_grad(&p, &t, 1)
            .unwrap();
        assert_eq!(a, b);
        // a genuine two-class distribution gives the same value
        let wide = LossKind::CategoricalCrossentropy
            .value_and_grad(
                &[0.8, 0.2, 0.3, 0.7, 0.1, 0.9],
                &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
                2,
            )
            .unwrap();
        assert!((wide.0 - a.0).abs() < 1e-12);
    }

    #[test]
    fn every_kind_is_nonnegative() {
        let p = [0.1, 0.6, 0.95];
        let t = [0.0, 1.0, 1.0];
        for kind in LossKind::all() {
            assert!(value(kind, &p, &t) >= 0.0, "{kind}");
        }
    }
}
