use serde::{Deserialize, Serialize};

use crate::config::WeightsMode;
use crate::error::{Result, WetError};
use crate::numerics::softmax_rows;
use crate::numerics::Tensor;

/// One weight per branch output (the text representations, then the
/// feature representation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub a: Vec<f64>,
    pub mode: WeightsMode,
}

impl EnsembleWeights {
    pub fn uniform(n: usize) -> Self {
        EnsembleWeights {
            a: vec![1.0 / n as f64; n],
            mode: WeightsMode::Uniform,
        }
    }

    pub fn new(a: Vec<f64>, mode: WeightsMode) -> Result<Self> {
        let w = EnsembleWeights { a, mode };
        w.validate()?;
        Ok(w)
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Index of the largest weight (the lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (j, &w) in self.a.iter().enumerate() {
            if w > self.a[best] {
                best = j;
            }
        }
        best
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() {
            return Err(WetError::invalid("ensemble needs at least one weight"));
        }
        if self.a.iter().any(|w| !w.is_finite()) {
            return Err(WetError::invalid("ensemble weights must be finite"));
        }
        if self.mode != WeightsMode::Learned {
            let sum: f64 = self.a.iter().sum();
            if self.a.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(WetError::invalid(format!(
                    "{} weights must be nonnegative and sum to 1, got {:?}",
                    self.mode, self.a
                )));
            }
        }
        Ok(())
    }
}

fn check_outputs(outputs: &[Vec<f64>]) -> Result<usize> {
    let first = outputs
        .first()
        .ok_or_else(|| WetError::invalid("no outputs to combine"))?;
    if outputs.iter().any(|o| o.len() != first.len()) {
        return Err(WetError::dim("ensemble", "outputs differ in length"));
    }
    Ok(first.len())
}

/// Plain mean of the branch outputs.
pub fn average_outputs(outputs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = check_outputs(outputs)?;
    let n = outputs.len() as f64;
    Ok((0..m)
        .map(|i| outputs.iter().map(|o| o[i]).sum::<f64>() / n)
        .collect())
}

/// `S_i = sum_j a_j R_j(i)`.
pub fn weighted_combine(outputs: &[Vec<f64>], weights: &EnsembleWeights) -> Result<Vec<f64>> {
    let m = check_outputs(outputs)?;
    if weights.len() != outputs.len() {
        return Err(WetError::invalid(format!(
            "{} weights for {} outputs",
            weights.len(),
            outputs.len()
        )));
    }
    Ok((0..m)
        .map(|i| outputs.iter().zip(&weights.a).map(|(o, a)| a * o[i]).sum())
        .collect())
}

/// `softmax(-errors / temperature)`.
pub fn derive_weights(errors: &[f64], temperature: f64) -> Result<EnsembleWeights> {
    if !(temperature > 0.0) {
        return Err(WetError::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if errors.is_empty() || errors.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(WetError::invalid(format!(
            "error rates must lie in [0, 1], got {errors:?}"
        )));
    }
    let logits = Tensor::new(
        &[1, errors.len()],
        errors.iter().map(|e| -e / temperature).collect(),
    )?;
    let a = softmax_rows(&logits)?.into_data();
    Ok(EnsembleWeights {
        a,
        mode: WeightsMode::ValidationDerived,
    })
}
