//! Attention kernels: scaled dot-product, post-softmax relative bias (eRPE),
//! ProbSparse query selection, and a multi-head wrapper around any of them.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WetError};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

/// Self-attention operands. `q` and `k` share their width; all share length.
#[derive(Debug, Clone, Copy)]
pub struct AttentionInputs {
    pub q: Var,
    pub k: Var,
    pub v: Var,
}

impl AttentionInputs {
    pub fn new(q: Var, k: Var, v: Var) -> Self {
        AttentionInputs { q, k, v }
    }

    /// Returns `(L, d_k, d_v)`.
    pub fn dims(&self, g: &Graph) -> Result<(usize, usize, usize)> {
        let (qs, ks, vs) = (g.shape(self.q), g.shape(self.k), g.shape(self.v));
        if qs.len() != 2 || ks.len() != 2 || vs.len() != 2 {
            return Err(WetError::dim("attention", "Q, K, V must be matrices"));
        }
        if qs[1] != ks[1] {
            return Err(WetError::dim(
                "attention",
                format!("Q width {} vs K width {}", qs[1], ks[1]),
            ));
        }
        if qs[0] != ks[0] || ks[0] != vs[0] {
            return Err(WetError::dim(
                "attention",
                format!("lengths Q {} K {} V {}", qs[0], ks[0], vs[0]),
            ));
        }
        if qs[1] == 0 {
            return Err(WetError::invalid("attention needs d_k > 0"));
        }
        Ok((qs[0], qs[1], vs[1]))
    }
}

/// Where the relative bias enters: after the softmax (as in the eRPE
/// aggregation formula) or on the logits, which keeps rows normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasPlacement {
    #[default]
    PostSoftmax,
    PreSoftmax,
}

fn scaled_scores(g: &mut Graph, q: Var, k: Var, d: usize) -> Result<Var> {
    let kt = g.transpose(k)?;
    let s = g.matmul(q, kt)?;
    g.scale(s, 1.0 / (d as f64).sqrt())
}

/// `softmax(Q K^T / sqrt(d_k)) V`.
pub fn scaled_dot_attention(g: &mut Graph, inp: &AttentionInputs) -> Result<Var> {
    let (_, dk, _) = inp.dims(g)?;
    let s = scaled_scores(g, inp.q, inp.k, dk)?;
    let a = g.softmax_rows(s)?;
    g.matmul(a, inp.v)
}

/// Attention with a learnable bias indexed by the offset `i - j`.
///
/// `bias` is an odd-length table whose centre entry is offset zero; it must
/// cover every offset of the sequence (length at least `2L - 1`).
pub fn erpe_attention(
    g: &mut Graph,
    inp: &AttentionInputs,
    bias: Var,
    placement: BiasPlacement,
) -> Result<Var> {
    let (l, dk, _) = inp.dims(g)?;
    let b = g.relative_bias(bias, l)?;
    let s = scaled_scores(g, inp.q, inp.k, dk)?;
    let weights = match placement {
        BiasPlacement::PostSoftmax => {
            let a = g.softmax_rows(s)?;
            g.add(a, b)?
        }
        BiasPlacement::PreSoftmax => {
            let biased = g.add(s, b)?;
            g.softmax_rows(biased)?
        }
    };
    g.matmul(weights, inp.v)
}

/// Evaluates `sum_j k(q_i,k_j) / sum_l k(q_i,k_l) * v_j` directly, without the graph.
pub fn kernel_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    kernel: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<Tensor> {
    let (l, dv) = (q.rows(), v.cols());
    if k.rows() != l || v.rows() != l || q.cols() != k.cols() {
        return Err(WetError::dim(
            "kernel_attention",
            "inconsistent operand shapes",
        ));
    }
    let mut out = vec![0.0; l * dv];
    for i in 0..l {
        let weights: Vec<f64> = (0..l).map(|j| kernel(q.row(i), k.row(j))).collect();
        let total: f64 = weights.iter().sum();
        for (j, w) in weights.iter().enumerate() {
            for c in 0..dv {
                out[i * dv + c] += w / total * v.at(j, c);
            }
        }
    }
    Tensor::new(&[l, dv], out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbSparseConfig {
    pub sampling_factor: f64,
}

impl Default for ProbSparseConfig {
    fn default() -> Self {
        ProbSparseConfig {
            sampling_factor: 5.0,
        }
    }
}

impl ProbSparseConfig {
    /// Number of active queries `u = ceil(c ln L)`, kept within `[1, L]`.
    pub fn selected_count(&self, len: usize) -> usize {
        let u = (self.sampling_factor * (len as f64).ln()).ceil();
        (u.max(1.0) as usize).min(len)
    }
}

/// Query dispersion `ln sum_j exp(s_j) - (1/L_k) sum_j exp(s_j)` with
/// `s_j = q_i . k_j / sqrt(2)`.
pub fn prob_sparse_measure(q: &Tensor, k: &Tensor) -> Result<Tensor> {
    if q.ndim() != 2 || k.ndim() != 2 || q.cols() != k.cols() {
        return Err(WetError::dim(
            "prob_sparse_measure",
            format!("{:?} vs {:?}", q.shape(), k.shape()),
        ));
    }
    let lk = k.rows();
    let scale = 1.0 / 2f64.sqrt();
    let mut out = Vec::with_capacity(q.rows());
    for i in 0..q.rows() {
        let scores: Vec<f64> = (0..lk)
            .map(|j| {
                q.row(i)
                    .iter()
                    .zip(k.row(j))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    * scale
            })
            .collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        // mean of exponentials, evaluated in log space: exp(lse - ln L_k)
        let mean_exp = (lse - (lk as f64).ln()).exp();
        let m = lse - mean_exp;
        if !m.is_finite() {
            return Err(WetError::numeric(
                "prob_sparse_measure",
                format!("query {i} dispersion overflowed"),
            ));
        }
        out.push(m);
    }
    Ok(Tensor::vector(out))
}

/// Indices of the `u` largest measures (ties to the lower index), ascending.
pub fn top_queries(measure: &[f64], u: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..measure.len()).collect();
    order.sort_by(|&a, &b| measure[b].total_cmp(&measure[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.into_iter().take(u).collect();
    chosen.sort_unstable();
    chosen
}

/// ProbSparse self-attention: the `u` most dispersed queries attend fully
/// (scaled by `sqrt(d_k)`); the remaining rows take the column mean of `V`.
pub fn prob_sparse_attention(
    g: &mut Graph,
    inp: &AttentionInputs,
    cfg: &ProbSparseConfig,
) -> Result<Var> {
    let (l, dk, dv) = inp.dims(g)?;
    let u = cfg.selected_count(l);
    if u == l {
        return scaled_dot_attention(g, inp);
    }
    let measure = prob_sparse_measure(g.value(inp.q), g.value(inp.k))?;
    let chosen = top_queries(measure.data(), u);

    let q_sel = g.gather_rows(inp.q, &chosen)?;
    let s = scaled_scores(g, q_sel, inp.k, dk)?;
    let a = g.softmax_rows(s)?;
    let active = g.matmul(a, inp.v)?;

    let mut place = Tensor::zeros(&[l, u]);
    let mut lazy = Tensor::ones(&[l, 1]);
    for (slot, &row) in chosen.iter().enumerate() {
        place.data_mut()[row * u + slot] = 1.0;
        lazy.data_mut()[row] = 0.0;
    }
    let place = g.constant(place)?;
    let lazy = g.constant(lazy)?;
    let scattered = g.matmul(place, active)?;
    let mean = g.mean_rows(inp.v)?;
    let mean = g.reshape(mean, &[1, dv])?;
    let filled = g.matmul(lazy, mean)?;
    g.add(scattered, filled)
}

/// Projection weights for [`multi_head`]: `[d_in, d_model]` matrices and
/// `[d_model]` biases for Q, K, V, and `[d_model, d_model]` plus bias for the output.
#[derive(Debug, Clone, Copy)]
pub struct HeadProjections {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub bq: Option<Var>,
    pub bk: Option<Var>,
    pub bv: Option<Var>,
    pub bo: Option<Var>,
}

fn project(g: &mut Graph, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let y = g.matmul(x, w)?;
    match b {
        Some(b) => g.add_row(y, b),
        None => Ok(y),
    }
}

/// Projects Q, K, V, runs `inner` independently per head on column slices,
/// concatenates the heads, and applies the output projection.
pub fn multi_head<F>(
    g: &mut Graph,
    inp: &AttentionInputs,
    heads: usize,
    proj: &HeadProjections,
    inner: F,
) -> Result<Var>
where
    F: Fn(&mut Graph, &AttentionInputs, usize) -> Result<Var>,
{
    let q = project(g, inp.q, proj.wq, proj.bq)?;
    let k = project(g, inp.k, proj.wk, proj.bk)?;
    let v = project(g, inp.v, proj.wv, proj.bv)?;
    let d_model = g.shape(q)[1];
    if heads == 0 || !d_model.is_multiple_of(heads) {
        return Err(WetError::invalid(format!(
            "d_model {d_model} is not divisible by {heads} heads"
        )));
    }
    let dh = d_model / heads;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let head = AttentionInputs {
            q: g.slice_cols(q, h * dh, dh)?,
            k: g.slice_cols(k, h * dh, dh)?,
            v: g.slice_cols(v, h * dh, dh)?,
        };
        outs.push(inner(g, &head, h)?);
    }
    let cat = if heads == 1 {
        outs[0]
    } else {
        g.concat_cols(&outs)?
    };
    project(g, cat, proj.wo, proj.bo)
}

#[derive(Debug, Clone, PartialEq)]
pub enum InnerAttention {
    ScaledDot,
    /// One relative-bias table per head.
    Erpe {
        tables: Vec<ParamId>,
        placement: BiasPlacement,
    },
    ProbSparse(ProbSparseConfig),
}

/// Multi-head attention layer with stored parameters.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub d_model: usize,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    bq: ParamId,
    bk: ParamId,
    bv: ParamId,
    bo: ParamId,
    pub inner: InnerAttention,
}

/// What the inner kernel of a new [`MultiHeadAttention`] should be.
#[derive(Debug, Clone, Copy)]
pub enum InnerKind {
    ScaledDot,
    /// Tables sized for sequences up to `max_len`, zero-initialised.
    Erpe {
        max_len: usize,
        placement: BiasPlacement,
    },
    ProbSparse(ProbSparseConfig),
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        d_model: usize,
        heads: usize,
        inner: InnerKind,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if heads == 0 || !d_model.is_multiple_of(heads) {
            return Err(WetError::invalid(format!(
                "d_model {d_model} is not divisible by {heads} heads"
            )));
        }
        let mut mat = |store: &mut ParamStore, name: &str| {
            store.add_glorot(format!("{prefix}.{name}"), d_model, d_model, rng)
        };
        let wq = mat(store, "wq");
        let wk = mat(store, "wk");
        let wv = mat(store, "wv");
        let wo = mat(store, "wo");
        let bias = |store: &mut ParamStore, name: &str| {
            store.add_filled(format!("{prefix}.{name}"), &[d_model], 0.0)
        };
        let (bq, bk, bv, bo) = (
            bias(store, "bq"),
            bias(store, "bk"),
            bias(store, "bv"),
            bias(store, "bo"),
        );
        let inner = match inner {
            InnerKind::ScaledDot => InnerAttention::ScaledDot,
            InnerKind::Erpe { max_len, placement } => {
                let tables = (0..heads)
                    .map(|h| {
                        store.add_filled(format!("{prefix}.rel_bias.{h}"), &[2 * max_len - 1], 0.0)
                    })
                    .collect();
                InnerAttention::Erpe { tables, placement }
            }
            InnerKind::ProbSparse(cfg) => InnerAttention::ProbSparse(cfg),
        };
        Ok(MultiHeadAttention {
            heads,
            d_model,
            wq,
            wk,
            wv,
            wo,
            bq,
            bk,
            bv,
            bo,
            inner,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![
            self.wq, self.wk, self.wv, self.wo, self.bq, self.bk, self.bv, self.bo,
        ];
        if let InnerAttention::Erpe { tables, .. } = &self.inner {
            ids.extend(tables);
        }
        ids
    }

    /// Self-attention over the rows of `x`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let proj = HeadProjections {
            wq: g.param(store, self.wq),
            wk: g.param(store, self.wk),
            wv: g.param(store, self.wv),
            wo: g.param(store, self.wo),
            bq: Some(g.param(store, self.bq)),
            bk: Some(g.param(store, self.bk)),
            bv: Some(g.param(store, self.bv)),
            bo: Some(g.param(store, self.bo)),
        };
        let inp = AttentionInputs::new(x, x, x);
        match &self.inner {
            InnerAttention::ScaledDot => multi_head(g, &inp, self.heads, &proj, |g, h, _| {
                scaled_dot_attention(g, h)
            }),
            InnerAttention::Erpe { tables, placement } => {
                let tables: Vec<Var> = tables.iter().map(|&t| g.param(store, t)).collect();
                multi_head(g, &inp, self.heads, &proj, |g, h, i| {
                    erpe_attention(g, h, tables[i], *placement)
                })
            }
            InnerAttention::ProbSparse(cfg) => multi_head(g, &inp, self.heads, &proj, |g, h, _| {
                prob_sparse_attention(g, h, cfg)
            }),
        }
    }
}
