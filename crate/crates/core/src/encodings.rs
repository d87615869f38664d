//! Fixed positional encodings: sinusoidal, length-aware tAPE, and the
//! feature-branch position embedding.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WetError};
use crate::numerics::Tensor;

/// Frequency base used when none is configured.
pub const DEFAULT_PE_BASE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncodingKind {
    Sinusoidal,
    Tape,
    FeatureBranchFixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionalEncodingSpec {
    pub kind: EncodingKind,
    pub seq_len: usize,
    pub d_model: usize,
    pub base: f64,
}

impl PositionalEncodingSpec {
    pub fn new(kind: EncodingKind, seq_len: usize, d_model: usize) -> Self {
        PositionalEncodingSpec {
            kind,
            seq_len,
            d_model,
            base: DEFAULT_PE_BASE,
        }
    }

    pub fn with_base(mut self, base: f64) -> Self {
        self.base = base;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 {
            return Err(WetError::invalid("positional encoding needs seq_len >= 1"));
        }
        if self.d_model == 0 || !self.d_model.is_multiple_of(2) {
            return Err(WetError::invalid(format!(
                "d_model must be even and positive, got {}",
                self.d_model
            )));
        }
        if !(self.base > 0.0) {
            return Err(WetError::invalid(format!(
                "encoding base must be positive, got {}",
                self.base
            )));
        }
        Ok(())
    }

    /// Builds the encoding matrix `[seq_len, d_model]` for this spec's kind.
    pub fn build(&self) -> Result<Tensor> {
        match self.kind {
            EncodingKind::Sinusoidal => sinusoidal_pe(self),
            EncodingKind::Tape => tape_pe(self),
            EncodingKind::FeatureBranchFixed => feature_branch_pe(self.seq_len, self.d_model),
        }
    }
}

/// Base frequency of the `k`-th sin/cos pair: `1 / base^(2k / d_model)`.
pub fn frequency(k: usize, d_model: usize, base: f64) -> f64 {
    1.0 / base.powf(2.0 * k as f64 / d_model as f64)
}

fn sinusoid_table(seq_len: usize, d_model: usize, freqs: &[f64]) -> Tensor {
    let mut data = vec![0.0; seq_len * d_model];
    for i in 0..seq_len {
        for (k, &w) in freqs.iter().enumerate() {
            let angle = i as f64 * w;
            data[i * d_model + 2 * k] = angle.sin();
            data[i * d_model + 2 * k + 1] = angle.cos();
        }
    }
    Tensor::new(&[seq_len, d_model], data).expect("table shape")
}

pub fn sinusoidal_pe(spec: &PositionalEncodingSpec) -> Result<Tensor> {
    spec.validate()?;
    let freqs: Vec<f64> = (0..spec.d_model / 2)
        .map(|k| frequency(k, spec.d_model, spec.base))
        .collect();
    Ok(sinusoid_table(spec.seq_len, spec.d_model, &freqs))
}

/// Frequencies rescaled by `d_model / L`.
pub fn tape_frequencies(spec: &PositionalEncodingSpec) -> Vec<f64> {
    let scale = spec.d_model as f64 / spec.seq_len as f64;
    (0..spec.d_model / 2)
        .map(|k| frequency(k, spec.d_model, spec.base) * scale)
        .collect()
}

pub fn tape_pe(spec: &PositionalEncodingSpec) -> Result<Tensor> {
    spec.validate()?;
    Ok(sinusoid_table(
        spec.seq_len,
        spec.d_model,
        &tape_frequencies(spec),
    ))
}

/// `(pos, 2j) -> sin((pos / 2L)^(2j/d))`, `(pos, 2j+1) -> cos` of the same argument.
pub fn feature_branch_pe(seq_len: usize, d_model: usize) -> Result<Tensor> {
    PositionalEncodingSpec::new(EncodingKind::FeatureBranchFixed, seq_len, d_model).validate()?;
    let mut data = vec![0.0; seq_len * d_model];
    for pos in 0..seq_len {
        let ratio = pos as f64 / (2.0 * seq_len as f64);
        for j in 0..d_model / 2 {
            let arg = ratio.powf(2.0 * j as f64 / d_model as f64);
            data[pos * d_model + 2 * j] = arg.sin();
            data[pos * d_model + 2 * j + 1] = arg.cos();
        }
    }
    Tensor::new(&[seq_len, d_model], data)
}
