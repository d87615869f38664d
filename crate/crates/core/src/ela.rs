//! Coordinate attention and its group-normalised ELA variant.
//!
//! Feature maps are stored channel-major as `[C, H*W]` graph variables. A
//! sequence representation `[L, d]` becomes a map with `C = d`, `H = L`,
//! `W = 1`.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WetError};
use crate::layers::Activation;
use crate::numerics::{ActivationKind, Graph, ParamId, ParamStore, Tensor, Var, NORM_EPSILON};

#[derive(Debug, Clone, Copy)]
pub struct FeatureMap {
    /// `[C, H*W]`, entry `(c, h*W + w)`.
    pub x: Var,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl FeatureMap {
    pub fn new(g: &Graph, x: Var, height: usize, width: usize) -> Result<Self> {
        let s = g.shape(x);
        if s.len() != 2 || height == 0 || width == 0 || s[0] == 0 || s[1] != height * width {
            return Err(WetError::dim(
                "FeatureMap",
                format!("{s:?} is not a [C, {height}x{width}] map"),
            ));
        }
        Ok(FeatureMap {
            x,
            channels: s[0],
            height,
            width,
        })
    }

    /// Views a `[L, d]` sequence as a `[C=d, H=L, W=1]` map.
    pub fn from_sequence(g: &mut Graph, seq: Var) -> Result<Self> {
        let len = g.shape(seq)[0];
        let x = g.transpose(seq)?;
        Self::new(g, x, len, 1)
    }

    /// Inverse of [`FeatureMap::from_sequence`].
    pub fn to_sequence(&self, g: &mut Graph) -> Result<Var> {
        if self.width != 1 {
            return Err(WetError::dim(
                "FeatureMap::to_sequence",
                "map width must be 1",
            ));
        }
        g.transpose(self.x)
    }
}

/// Pooling denominators: cross-dimension (height for the width-sum, width for
/// the height-sum) or true means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolNormalization {
    #[default]
    CrossDimension,
    CorrectedMean,
}

/// Directional average pooling: `z_h` is `[C, H]`, `z_w` is `[C, W]`.
pub fn strip_pool(g: &mut Graph, fm: &FeatureMap, norm: PoolNormalization) -> Result<(Var, Var)> {
    let (h, w) = (fm.height, fm.width);
    let (dh, dw) = match norm {
        PoolNormalization::CrossDimension => (h as f64, w as f64),
        PoolNormalization::CorrectedMean => (w as f64, h as f64),
    };
    let mut pool_h = Tensor::zeros(&[h * w, h]);
    let mut pool_w = Tensor::zeros(&[h * w, w]);
    for i in 0..h {
        for j in 0..w {
            pool_h.data_mut()[(i * w + j) * h + i] = 1.0 / dh;
            pool_w.data_mut()[(i * w + j) * w + j] = 1.0 / dw;
        }
    }
    let ph = g.constant(pool_h)?;
    let pw = g.constant(pool_w)?;
    Ok((g.matmul(fm.x, ph)?, g.matmul(fm.x, pw)?))
}

/// `y_c(i,j) = x_c(i,j) * g_h(c,i) * g_w(c,j)`.
pub fn coordinate_attention_apply(
    g: &mut Graph,
    fm: &FeatureMap,
    gate_h: Var,
    gate_w: Var,
) -> Result<FeatureMap> {
    let (c, h, w) = (fm.channels, fm.height, fm.width);
    if g.shape(gate_h) != [c, h] || g.shape(gate_w) != [c, w] {
        return Err(WetError::invalid(format!(
            "gate shapes {:?}/{:?} do not match map [{c},{h},{w}]",
            g.shape(gate_h),
            g.shape(gate_w)
        )));
    }
    let mut expand_h = Tensor::zeros(&[h, h * w]);
    let mut expand_w = Tensor::zeros(&[w, h * w]);
    for i in 0..h {
        for j in 0..w {
            expand_h.data_mut()[i * h * w + i * w + j] = 1.0;
            expand_w.data_mut()[j * h * w + i * w + j] = 1.0;
        }
    }
    let eh = g.constant(expand_h)?;
    let ew = g.constant(expand_w)?;
    let gh = g.matmul(gate_h, eh)?;
    let gw = g.matmul(gate_w, ew)?;
    let y = g.mul(fm.x, gh)?;
    let y = g.mul(y, gw)?;
    FeatureMap::new(g, y, h, w)
}

/// 1x1 convolution over channels: `W [out, in] * X [in, P] + b`.
#[derive(Debug, Clone, Copy)]
pub struct ChannelMix {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ChannelMix {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        ChannelMix {
            weight: store.add_glorot(format!("{name}.weight"), c_out, c_in, rng),
            bias: store.add_filled(format!("{name}.bias"), &[c_out], 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(w, x)?;
        g.add_col(y, b)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }
}

/// Per-channel normalisation with running statistics for evaluation.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    /// Use running statistics even in training mode.
    pub frozen: bool,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        BatchNorm {
            gamma: store.add_filled(format!("{name}.gamma"), &[channels], 1.0),
            beta: store.add_filled(format!("{name}.beta"), &[channels], 0.0),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            frozen: false,
        }
    }

    /// Normalises each channel of `[C, P]`. In training mode the statistics
    /// come from the `P` positions of this sample (a batch of one) and the
    /// running estimates are updated.
    pub fn forward(&mut self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (c, p) = (g.shape(x)[0], g.shape(x)[1]);
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        if g.is_training() && !self.frozen {
            let data = g.value(x).data().to_vec();
            for ch in 0..c {
                let row = &data[ch * p..(ch + 1) * p];
                let mean = row.iter().sum::<f64>() / p as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / p as f64;
                self.running_mean[ch] =
                    (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean;
                self.running_var[ch] =
                    (1.0 - self.momentum) * self.running_var[ch] + self.momentum * var;
            }
            return g.group_norm(x, gamma, beta, c);
        }
        let inv: Vec<f64> = self
            .running_var
            .iter()
            .map(|v| 1.0 / (v + NORM_EPSILON).sqrt())
            .collect();
        let shift: Vec<f64> = self
            .running_mean
            .iter()
            .zip(&inv)
            .map(|(m, s)| -m * s)
            .collect();
        let inv = g.constant(Tensor::vector(inv))?;
        let shift = g.constant(Tensor::vector(shift))?;
        let xhat = g.mul_col(x, inv)?;
        let xhat = g.add_col(xhat, shift)?;
        let y = g.mul_col(xhat, gamma)?;
        g.add_col(y, beta)
    }
}

/// Largest divisor of `channels` not exceeding `min(16, channels / r)`.
pub fn group_count(channels: usize, reduction: usize) -> usize {
    let cap = (channels / reduction.max(1)).clamp(1, 16);
    (1..=cap)
        .rev()
        .find(|g| channels.is_multiple_of(*g))
        .unwrap_or(1)
}

/// Coordinate attention: joint transform `F1` with batch norm and
/// nonlinearity, then directional gates `F_h`, `F_w`.
#[derive(Debug, Clone)]
pub struct CoordinateAttention {
    pub channels: usize,
    pub reduction: usize,
    pub joint: ChannelMix,
    pub bn: BatchNorm,
    pub delta: Activation,
    pub gate_h: ChannelMix,
    pub gate_w: ChannelMix,
    pub pooling: PoolNormalization,
}

impl CoordinateAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        reduction: usize,
        delta: ActivationKind,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if reduction == 0 || !channels.is_multiple_of(reduction) {
            return Err(WetError::invalid(format!(
                "{channels} channels not divisible by reduction {reduction}"
            )));
        }
        let mid = channels / reduction;
        Ok(CoordinateAttention {
            channels,
            reduction,
            joint: ChannelMix::new(store, &format!("{name}.f1"), channels, mid, rng),
            bn: BatchNorm::new(store, &format!("{name}.bn"), mid),
            delta: Activation::new(store, &format!("{name}.delta"), delta),
            gate_h: ChannelMix::new(store, &format!("{name}.fh"), mid, channels, rng),
            gate_w: ChannelMix::new(store, &format!("{name}.fw"), mid, channels, rng),
            pooling: PoolNormalization::CrossDimension,
        })
    }

    /// `f = delta(BN(F1([z_h ; z_w])))`, shape `[C/r, H+W]`.
    pub fn joint_transform(
        &mut self,
        g: &mut Graph,
        store: &ParamStore,
        z_h: Var,
        z_w: Var,
    ) -> Result<Var> {
        if g.shape(z_h)[0] != self.channels || g.shape(z_w)[0] != self.channels {
            return Err(WetError::dim(
                "joint_transform",
                "pooled maps do not have the configured channel count",
            ));
        }
        let cat = g.concat_cols(&[z_h, z_w])?;
        let y = self.joint.forward(g, store, cat)?;
        let y = self.bn.forward(g, store, y)?;
        self.delta.forward(g, store, y)
    }

    /// Splits `f` into its height and width parts and maps each to sigmoid gates.
    pub fn directional_gates(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        f: Var,
        height: usize,
        width: usize,
    ) -> Result<(Var, Var)> {
        let f_h = g.slice_cols(f, 0, height)?;
        let f_w = g.slice_cols(f, height, width)?;
        let a_h = self.gate_h.forward(g, store, f_h)?;
        let a_w = self.gate_w.forward(g, store, f_w)?;
        Ok((g.sigmoid(a_h)?, g.sigmoid(a_w)?))
    }

    pub fn forward(
        &mut self,
        g: &mut Graph,
        store: &ParamStore,
        fm: &FeatureMap,
    ) -> Result<FeatureMap> {
        let (z_h, z_w) = strip_pool(g, fm, self.pooling)?;
        let f = self.joint_transform(g, store, z_h, z_w)?;
        let (gh, gw) = self.directional_gates(g, store, f, fm.height, fm.width)?;
        coordinate_attention_apply(g, fm, gh, gw)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.joint.param_ids();
        ids.extend([self.bn.gamma, self.bn.beta]);
        ids.extend(self.delta.param_ids());
        ids.extend(self.gate_h.param_ids());
        ids.extend(self.gate_w.param_ids());
        ids
    }
}

/// Group-normalised gate for one direction: `sigma(GN(F(z)))`.
#[derive(Debug, Clone, Copy)]
pub struct NormalizedGate {
    pub transform: ChannelMix,
    pub gn_gamma: ParamId,
    pub gn_beta: ParamId,
}

impl NormalizedGate {
    fn new(store: &mut ParamStore, name: &str, channels: usize, rng: &mut ChaCha8Rng) -> Self {
        NormalizedGate {
            transform: ChannelMix::new(store, &format!("{name}.f"), channels, channels, rng),
            gn_gamma: store.add_filled(format!("{name}.gn_gamma"), &[channels], 1.0),
            gn_beta: store.add_filled(format!("{name}.gn_beta"), &[channels], 0.0),
        }
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, z: Var, groups: usize) -> Result<Var> {
        let a = self.transform.forward(g, store, z)?;
        let gamma = g.param(store, self.gn_gamma);
        let beta = g.param(store, self.gn_beta);
        let n = g.group_norm(a, gamma, beta, groups)?;
        g.sigmoid(n)
    }

    fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.transform.param_ids();
        ids.extend([self.gn_gamma, self.gn_beta]);
        ids
    }
}

/// Efficient local attention: strip pooling, then an independent
/// group-normalised sigmoid gate per direction, applied multiplicatively.
#[derive(Debug, Clone)]
pub struct Ela {
    pub channels: usize,
    pub groups: usize,
    pub gate_h: NormalizedGate,
    pub gate_w: NormalizedGate,
    pub pooling: PoolNormalization,
}

impl Ela {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        reduction: usize,
        pooling: PoolNormalization,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if reduction == 0 || !channels.is_multiple_of(reduction) {
            return Err(WetError::invalid(format!(
                "{channels} channels not divisible by reduction {reduction}"
            )));
        }
        Ok(Ela {
            channels,
            groups: group_count(channels, reduction),
            gate_h: NormalizedGate::new(store, &format!("{name}.h"), channels, rng),
            gate_w: NormalizedGate::new(store, &format!("{name}.w"), channels, rng),
            pooling,
        })
    }

    /// Returns the gates `(g_h [C,H], g_w [C,W])` for a map.
    pub fn gates(&self, g: &mut Graph, store: &ParamStore, fm: &FeatureMap) -> Result<(Var, Var)> {
        if fm.channels != self.channels {
            return Err(WetError::dim(
                "ela_forward",
                format!("map has {} channels, module {}", fm.channels, self.channels),
            ));
        }
        let (z_h, z_w) = strip_pool(g, fm, self.pooling)?;
        let gh = self.gate_h.forward(g, store, z_h, self.groups)?;
        let gw = self.gate_w.forward(g, store, z_w, self.groups)?;
        Ok((gh, gw))
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        fm: &FeatureMap,
    ) -> Result<FeatureMap> {
        let (gh, gw) = self.gates(g, store, fm)?;
        coordinate_attention_apply(g, fm, gh, gw)
    }

    /// ELA over a `[L, d]` sequence, returning `[L, d]`.
    pub fn forward_sequence(&self, g: &mut Graph, store: &ParamStore, seq: Var) -> Result<Var> {
        let fm = FeatureMap::from_sequence(g, seq)?;
        let out = self.forward(g, store, &fm)?;
        out.to_sequence(g)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.gate_h.param_ids();
        ids.extend(self.gate_w.param_ids());
        ids
    }
}
