//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and a single reverse sweep computes every gradient.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::ActivationKind;
use super::loss::LossKind;
use super::params::{ParamId, ParamStore};
use super::tensor::{matmul_into, matmul_nt_acc, matmul_tn_acc, Tensor};
use crate::error::{Result, WetError};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub const NORM_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[m,n] + [n]` broadcast over rows.
    AddRow(Var, Var),
    /// `[m,n] + [m]` broadcast over columns.
    AddCol(Var, Var),
    /// `[m,n] * [m]` broadcast over columns.
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    SoftmaxRows(Var),
    Activation(Var, ActivationKind),
    PRelu(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Dropout(Var, Vec<f64>),
    Loss {
        pred: Var,
        target: Tensor,
        kind: LossKind,
    },
    Reshape(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    RelativeBias {
        table: Var,
        len: usize,
        center: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A single forward computation and its tape.
///
/// `training` switches dropout on; everything else is mode-independent.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    training: bool,
}

impl Graph {
    pub fn new(training: bool) -> Self {
        Graph {
            nodes: Vec::with_capacity(256),
            params: HashMap::new(),
            training,
        }
    }

    pub fn eval() -> Self {
        Self::new(false)
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor,
        op: Op,
        parents: &[Var],
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(WetError::numeric(op_name, "produced a non-finite value"));
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(WetError::numeric("input", "non-finite input value"));
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input; no gradient is computed for it.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Input whose gradient is reported by [`Gradients::get`].
    pub fn tracked(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Leaf for a stored parameter. Each parameter appears once per graph.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let value = store.value(id).clone();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let s = self.shape(v);
        if s.len() != 2 {
            return Err(WetError::dim(
                op,
                format!("expected a matrix, got shape {s:?}"),
            ));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(WetError::dim("matmul", format!("[{m},{k}] x [{k2},{n}]")));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        self.push(
            "matmul",
            Tensor::new(&[m, n], out)?,
            Op::MatMul(a, b),
            &[a, b],
        )
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transpose()?;
        self.push("transpose", t, Op::Transpose(a), &[a])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(WetError::dim(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let t = self.zip_with(a, b, |x, y| x + y);
        self.push("add", t, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let t = self.zip_with(a, b, |x, y| x - y);
        self.push("sub", t, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let t = self.zip_with(a, b, |x, y| x * y);
        self.push("mul", t, Op::Mul(a, b), &[a, b])
    }

    /// Adds a length-`n` vector to every row of an `[m,n]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("add_row", a)?;
        if self.value(row).len() != n {
            return Err(WetError::dim(
                "add_row",
                format!("[{m},{n}] + {:?}", self.shape(row)),
            ));
        }
        let r = self.value(row).data().to_vec();
        let mut t = self.value(a).clone();
        for chunk in t.data_mut().chunks_mut(n) {
            chunk.iter_mut().zip(&r).for_each(|(x, y)| *x += y);
        }
        self.push("add_row", t, Op::AddRow(a, row), &[a, row])
    }

    /// Adds `col[i]` to every entry of row `i`.
    pub fn add_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("add_col", a)?;
        if self.value(col).len() != m {
            return Err(WetError::dim(
                "add_col",
                format!("[{m},{n}] + {:?}", self.shape(col)),
            ));
        }
        let c = self.value(col).data().to_vec();
        let mut t = self.value(a).clone();
        for (chunk, y) in t.data_mut().chunks_mut(n).zip(&c) {
            chunk.iter_mut().for_each(|x| *x += y);
        }
        self.push("add_col", t, Op::AddCol(a, col), &[a, col])
    }

    /// Multiplies every entry of row `i` by `col[i]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("mul_col", a)?;
        if self.value(col).len() != m {
            return Err(WetError::dim(
                "mul_col",
                format!("[{m},{n}] * {:?}", self.shape(col)),
            ));
        }
        let c = self.value(col).data().to_vec();
        let mut t = self.value(a).clone();
        for (chunk, y) in t.data_mut().chunks_mut(n).zip(&c) {
            chunk.iter_mut().for_each(|x| *x *= y);
        }
        self.push("mul_col", t, Op::MulCol(a, col), &[a, col])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x * c);
        self.push("scale", t, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x + c);
        self.push("add_scalar", t, Op::AddScalar(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.sum() / t.len() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Column means of an `[m,n]` matrix, shape `[n]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("mean_rows", a)?;
        let mut out = vec![0.0; n];
        for row in self.value(a).data().chunks(n) {
            out.iter_mut().zip(row).for_each(|(o, x)| *o += x);
        }
        out.iter_mut().for_each(|o| *o /= m as f64);
        self.push("mean_rows", Tensor::vector(out), Op::MeanRows(a), &[a])
    }

    /// Row-wise softmax, stabilised by subtracting each row's maximum.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (_, n) = self.matrix_dims("softmax_rows", a)?;
        let x = self.value(a);
        if !x.is_finite() {
            return Err(WetError::numeric("softmax_rows", "non-finite logits"));
        }
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(n) {
            softmax_in_place(row);
        }
        self.push("softmax_rows", out, Op::SoftmaxRows(a), &[a])
    }

    /// Elementwise activation. PReLU needs [`Graph::prelu`] with its slope variable.
    pub fn activation(&mut self, a: Var, kind: ActivationKind) -> Result<Var> {
        if kind.is_learnable() {
            return Err(WetError::invalid(
                "PReLU requires a learnable slope; use Graph::prelu",
            ));
        }
        let t = self.value(a).map(|x| kind.eval(x, 0.0).0);
        self.push("activation", t, Op::Activation(a, kind), &[a])
    }

    pub fn prelu(&mut self, a: Var, alpha: Var) -> Result<Var> {
        if self.value(alpha).len() != 1 {
            return Err(WetError::dim("prelu", "slope must be a scalar"));
        }
        let s = self.value(alpha).item();
        let t = self.value(a).map(|x| if x > 0.0 { x } else { s * x });
        self.push("prelu", t, Op::PRelu(a, alpha), &[a, alpha])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(sigmoid);
        self.push("sigmoid", t, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(f64::tanh);
        self.push("tanh", t, Op::Tanh(a), &[a])
    }

    /// Inverted dropout. Identity outside training mode or at rate 0.
    pub fn dropout(&mut self, a: Var, rate: f64, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(WetError::invalid(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !self.training || rate == 0.0 {
            return Ok(a);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let x = self.value(a);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(x.shape(), data)?;
        self.push("dropout", t, Op::Dropout(a, mask), &[a])
    }

    pub fn loss(&mut self, kind: LossKind, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(WetError::dim(
                "compute_loss",
                format!("{:?} vs {:?}", p.shape(), target.shape()),
            ));
        }
        let (value, _) = kind.value_and_grad(p.data(), target.data(), p.cols().max(1))?;
        if !value.is_finite() {
            return Err(WetError::numeric(
                "compute_loss",
                format!("{kind} loss is not finite"),
            ));
        }
        self.push(
            "compute_loss",
            Tensor::scalar(value),
            Op::Loss {
                pred,
                target: target.clone(),
                kind,
            },
            &[pred],
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).reshape(shape)?;
        self.push("reshape", t, Op::Reshape(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| WetError::dim("concat_cols", "nothing to concatenate"))?;
        let m = self.matrix_dims("concat_cols", first)?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.matrix_dims("concat_cols", p)?;
            if pm != m {
                return Err(WetError::dim(
                    "concat_cols",
                    format!("row counts {m} and {pm}"),
                ));
            }
            widths.push(pn);
        }
        let n: usize = widths.iter().sum();
        let mut out = vec![0.0; m * n];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for i in 0..m {
                out[i * n + offset..i * n + offset + w].copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        self.push(
            "concat_cols",
            Tensor::new(&[m, n], out)?,
            Op::ConcatCols(parts.to_vec()),
            parts,
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| WetError::dim("concat_rows", "nothing to concatenate"))?;
        let n = self.value(first).cols();
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != n || t.ndim() > 2 {
                return Err(WetError::dim(
                    "concat_rows",
                    format!("row width {n} vs {:?}", t.shape()),
                ));
            }
            data.extend_from_slice(t.data());
            m += t.rows();
        }
        self.push(
            "concat_rows",
            Tensor::new(&[m, n], data)?,
            Op::ConcatRows(parts.to_vec()),
            parts,
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims("slice_cols", a)?;
        if start + len > n || len == 0 {
            return Err(WetError::dim(
                "slice_cols",
                format!("columns {start}..{} of {n}", start + len),
            ));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        self.push(
            "slice_cols",
            Tensor::new(&[m, len], out)?,
            Op::SliceCols(a, start),
            &[a],
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims("slice_rows", a)?;
        if start + len > m || len == 0 {
            return Err(WetError::dim(
                "slice_rows",
                format!("rows {start}..{} of {m}", start + len),
            ));
        }
        let out = self.value(a).data()[start * n..(start + len) * n].to_vec();
        self.push(
            "slice_rows",
            Tensor::new(&[len, n], out)?,
            Op::SliceRows(a, start),
            &[a],
        )
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (m, n) = self.matrix_dims("gather_rows", a)?;
        if rows.is_empty() || rows.iter().any(|&r| r >= m) {
            return Err(WetError::dim(
                "gather_rows",
                format!("indices {rows:?} out of {m} rows"),
            ));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            out.extend_from_slice(&src[r * n..(r + 1) * n]);
        }
        self.push(
            "gather_rows",
            Tensor::new(&[rows.len(), n], out)?,
            Op::GatherRows(a, rows.to_vec()),
            &[a],
        )
    }

    /// Normalises each row of `[m,n]` then applies per-column `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("layer_norm", x)?;
        if self.value(gamma).len() != n || self.value(beta).len() != n {
            return Err(WetError::dim(
                "layer_norm",
                format!("affine params must have length {n}"),
            ));
        }
        let mut xhat = self.value(x).data().to_vec();
        let mut inv_std = Vec::with_capacity(m);
        for row in xhat.chunks_mut(n) {
            inv_std.push(normalize_in_place(row));
        }
        let (gm, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = xhat.clone();
        for row in out.chunks_mut(n) {
            for j in 0..n {
                row[j] = row[j] * gm[j] + bt[j];
            }
        }
        let t = Tensor::new(&[m, n], out)?;
        self.push(
            "layer_norm",
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// Group normalisation over a `[C,P]` map: rows are channels, split into
    /// `groups` contiguous blocks, each normalised over all its entries, then
    /// per-channel affine.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Result<Var> {
        let (c, p) = self.matrix_dims("group_norm", x)?;
        if groups == 0 || c % groups != 0 {
            return Err(WetError::dim(
                "group_norm",
                format!("{c} channels not divisible into {groups} groups"),
            ));
        }
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(WetError::dim(
                "group_norm",
                format!("affine params must have length {c}"),
            ));
        }
        let block = (c / groups) * p;
        let mut xhat = self.value(x).data().to_vec();
        let mut inv_std = Vec::with_capacity(groups);
        for chunk in xhat.chunks_mut(block) {
            inv_std.push(normalize_in_place(chunk));
        }
        let (gm, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = xhat.clone();
        for (ch, row) in out.chunks_mut(p).enumerate() {
            row.iter_mut().for_each(|v| *v = *v * gm[ch] + bt[ch]);
        }
        let t = Tensor::new(&[c, p], out)?;
        self.push(
            "group_norm",
            t,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// `[len,len]` matrix with entry `(i,j) = table[i - j + center]`.
    pub fn relative_bias(&mut self, table: Var, len: usize) -> Result<Var> {
        let size = self.value(table).len();
        if size.is_multiple_of(2) || len == 0 || size < 2 * len - 1 {
            return Err(WetError::invalid(format!(
                "relative bias table of length {size} cannot cover sequence length {len} (needs odd length >= {})",
                2 * len.max(1) - 1
            )));
        }
        let center = size / 2;
        let w = self.value(table).data();
        let mut out = vec![0.0; len * len];
        for i in 0..len {
            for j in 0..len {
                out[i * len + j] = w[center + i - j];
            }
        }
        let t = Tensor::new(&[len, len], out)?;
        self.push(
            "relative_bias",
            t,
            Op::RelativeBias { table, len, center },
            &[table],
        )
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(WetError::invalid(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(self.shape(loss)));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.propagate(i, &gy, &mut grads)?;
            grads[i] = Some(gy);
        }
        Ok(Gradients {
            grads,
            params: self.params.iter().map(|(&p, &v)| (p, v)).collect(),
        })
    }

    /// Backward pass whose parameter gradients are added into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.backward(loss)?;
        grads.accumulate_into(store)
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.wants(v) {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.shape(v)));
        }
        f(slot.as_mut().expect("initialised").data_mut());
    }

    fn propagate(&self, i: usize, gy: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let g = gy.data();
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |ga| matmul_nt_acc(g, bv, ga, m, k, n));
                self.acc(grads, *b, |gb| matmul_tn_acc(av, g, gb, m, k, n));
            }
            Op::Transpose(a) => {
                let gt = gy.transpose()?;
                self.acc(grads, *a, |ga| add_slice(ga, gt.data()));
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, |ga| add_slice(ga, g));
                self.acc(grads, *b, |gb| add_slice(gb, g));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |ga| add_slice(ga, g));
                self.acc(grads, *b, |gb| {
                    gb.iter_mut().zip(g).for_each(|(o, x)| *o -= x)
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |ga| {
                    for k in 0..g.len() {
                        ga[k] += g[k] * bv[k];
                    }
                });
                self.acc(grads, *b, |gb| {
                    for k in 0..g.len() {
                        gb[k] += g[k] * av[k];
                    }
                });
            }
            Op::AddRow(a, r) => {
                let n = self.value(*r).len();
                self.acc(grads, *a, |ga| add_slice(ga, g));
                self.acc(grads, *r, |gr| {
                    for row in g.chunks(n) {
                        add_slice(gr, row);
                    }
                });
            }
            Op::AddCol(a, c) => {
                let n = self.shape(*a)[1];
                self.acc(grads, *a, |ga| add_slice(ga, g));
                self.acc(grads, *c, |gc| {
                    for (o, row) in gc.iter_mut().zip(g.chunks(n)) {
                        *o += row.iter().sum::<f64>();
                    }
                });
            }
            Op::MulCol(a, c) => {
                let n = self.shape(*a)[1];
                let (av, cv) = (self.value(*a).data(), self.value(*c).data());
                self.acc(grads, *a, |ga| {
                    for (r, (grow, garow)) in g.chunks(n).zip(ga.chunks_mut(n)).enumerate() {
                        garow
                            .iter_mut()
                            .zip(grow)
                            .for_each(|(o, x)| *o += x * cv[r]);
                    }
                });
                self.acc(grads, *c, |gc| {
                    for (r, (grow, arow)) in g.chunks(n).zip(av.chunks(n)).enumerate() {
                        gc[r] += grow.iter().zip(arow).map(|(x, y)| x * y).sum::<f64>();
                    }
                });
            }
            Op::Scale(a, c) => self.acc(grads, *a, |ga| {
                ga.iter_mut().zip(g).for_each(|(o, x)| *o += c * x)
            }),
            Op::AddScalar(a) | Op::Reshape(a) => self.acc(grads, *a, |ga| add_slice(ga, g)),
            Op::Sum(a) => self.acc(grads, *a, |ga| ga.iter_mut().for_each(|o| *o += g[0])),
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                self.acc(grads, *a, |ga| ga.iter_mut().for_each(|o| *o += g[0] / n));
            }
            Op::MeanRows(a) => {
                let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                self.acc(grads, *a, |ga| {
                    for row in ga.chunks_mut(n) {
                        row.iter_mut().zip(g).for_each(|(o, x)| *o += x / m as f64);
                    }
                });
            }
            Op::SoftmaxRows(a) => {
                let n = self.shape(*a)[1];
                self.acc(grads, *a, |ga| {
                    for ((grow, yrow), garow) in g.chunks(n).zip(y.chunks(n)).zip(ga.chunks_mut(n))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(x, s)| x * s).sum();
                        for j in 0..n {
                            garow[j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                });
            }
            Op::Activation(a, kind) => {
                let av = self.value(*a).data();
                self.acc(grads, *a, |ga| {
                    for k in 0..g.len() {
                        ga[k] += g[k] * kind.eval(av[k], 0.0).1;
                    }
                });
            }
            Op::PRelu(a, alpha) => {
                let av = self.value(*a).data();
                let s = self.value(*alpha).item();
                self.acc(grads, *a, |ga| {
                    for k in 0..g.len() {
                        ga[k] += if av[k] > 0.0 { g[k] } else { s * g[k] };
                    }
                });
                self.acc(grads, *alpha, |gs| {
                    gs[0] += av
                        .iter()
                        .zip(g)
                        .filter(|(x, _)| **x <= 0.0)
                        .map(|(x, d)| x * d)
                        .sum::<f64>();
                });
            }
            Op::Sigmoid(a) => self.acc(grads, *a, |ga| {
                for k in 0..g.len() {
                    ga[k] += g[k] * y[k] * (1.0 - y[k]);
                }
            }),
            Op::Tanh(a) => self.acc(grads, *a, |ga| {
                for k in 0..g.len() {
                    ga[k] += g[k] * (1.0 - y[k] * y[k]);
                }
            }),
            Op::Dropout(a, mask) => self.acc(grads, *a, |ga| {
                for k in 0..g.len() {
                    ga[k] += g[k] * mask[k];
                }
            }),
            Op::Loss { pred, target, kind } => {
                let p = self.value(*pred);
                let (_, dp) = kind.value_and_grad(p.data(), target.data(), p.cols().max(1))?;
                self.acc(grads, *pred, |gp| {
                    gp.iter_mut().zip(&dp).for_each(|(o, d)| *o += g[0] * d)
                });
            }
            Op::ConcatCols(parts) => {
                let (m, n) = (node.value.shape()[0], node.value.shape()[1]);
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    self.acc(grads, p, |gp| {
                        for r in 0..m {
                            add_slice(
                                &mut gp[r * w..(r + 1) * w],
                                &g[r * n + offset..r * n + offset + w],
                            );
                        }
                    });
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.acc(grads, p, |gp| add_slice(gp, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::SliceCols(a, start) => {
                let n = self.shape(*a)[1];
                let w = node.value.shape()[1];
                self.acc(grads, *a, |ga| {
                    for (r, grow) in g.chunks(w).enumerate() {
                        add_slice(&mut ga[r * n + start..r * n + start + w], grow);
                    }
                });
            }
            Op::SliceRows(a, start) => {
                let n = self.shape(*a)[1];
                self.acc(grads, *a, |ga| {
                    add_slice(&mut ga[start * n..start * n + g.len()], g)
                });
            }
            Op::GatherRows(a, rows) => {
                let n = self.shape(*a)[1];
                self.acc(grads, *a, |ga| {
                    for (k, &r) in rows.iter().enumerate() {
                        add_slice(&mut ga[r * n..(r + 1) * n], &g[k * n..(k + 1) * n]);
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let n = self.shape(*x)[1];
                let gm = self.value(*gamma).data();
                self.acc(grads, *gamma, |gg| {
                    for (grow, hrow) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            gg[j] += grow[j] * hrow[j];
                        }
                    }
                });
                self.acc(grads, *beta, |gb| {
                    for grow in g.chunks(n) {
                        add_slice(gb, grow);
                    }
                });
                self.acc(grads, *x, |gx| {
                    let mut dxhat = vec![0.0; n];
                    for (r, ((grow, hrow), gxrow)) in g
                        .chunks(n)
                        .zip(xhat.chunks(n))
                        .zip(gx.chunks_mut(n))
                        .enumerate()
                    {
                        for j in 0..n {
                            dxhat[j] = grow[j] * gm[j];
                        }
                        normalize_backward(&dxhat, hrow, inv_std[r], gxrow);
                    }
                });
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                inv_std,
            } => {
                let (c, p) = (self.shape(*x)[0], self.shape(*x)[1]);
                let gm = self.value(*gamma).data();
                self.acc(grads, *gamma, |gg| {
                    for ch in 0..c {
                        gg[ch] += (0..p)
                            .map(|k| g[ch * p + k] * xhat[ch * p + k])
                            .sum::<f64>();
                    }
                });
                self.acc(grads, *beta, |gb| {
                    for ch in 0..c {
                        gb[ch] += g[ch * p..(ch + 1) * p].iter().sum::<f64>();
                    }
                });
                self.acc(grads, *x, |gx| {
                    let block = (c / groups) * p;
                    let dxhat: Vec<f64> = (0..c * p).map(|k| g[k] * gm[k / p]).collect();
                    for gi in 0..*groups {
                        let range = gi * block..(gi + 1) * block;
                        normalize_backward(
                            &dxhat[range.clone()],
                            &xhat[range.clone()],
                            inv_std[gi],
                            &mut gx[range],
                        );
                    }
                });
            }
            Op::RelativeBias { table, len, center } => {
                self.acc(grads, *table, |gt| {
                    for i in 0..*len {
                        for j in 0..*len {
                            gt[center + i - j] += g[i * len + j];
                        }
                    }
                });
            }
        }
        Ok(())
    }
}

/// Gradients from one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` was tracked and reached.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params
            .iter()
            .filter_map(|&(p, v)| self.get(v).map(|g| (p, g)))
    }

    /// Adds parameter gradients into the store in parameter-id order.
    pub fn accumulate_into(&self, store: &mut ParamStore) -> Result<()> {
        let mut pairs: Vec<_> = self.param_grads().collect();
        pairs.sort_by_key(|(p, _)| *p);
        for (p, g) in pairs {
            store.accumulate_one(p, g)?;
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

fn add_slice(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Standardises `values` in place (population variance) and returns 1/std.
fn normalize_in_place(values: &mut [f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + NORM_EPSILON).sqrt();
    values.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    inv
}

fn normalize_backward(dxhat: &[f64], xhat: &[f64], inv_std: f64, out: &mut [f64]) {
    let n = dxhat.len() as f64;
    let mean_d = dxhat.iter().sum::<f64>() / n;
    let mean_dx = dxhat.iter().zip(xhat).map(|(d, x)| d * x).sum::<f64>() / n;
    for k in 0..dxhat.len() {
        out[k] += inv_std * (dxhat[k] - mean_d - xhat[k] * mean_dx);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::eval();
        let a = g.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        let b = g.constant(mat(&[&[1.0], &[1.0]])).unwrap();
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, 7.0]);

        let x = g
            .constant(mat(&[&[0.5, -1.0, 2.0], &[3.0, 0.0, 1.5]]))
            .unwrap();
        let i = g.constant(Tensor::identity(2)).unwrap();
        let ix = g.matmul(i, x).unwrap();
        assert_eq!(g.value(ix), g.value(x));

        let z = g.constant(Tensor::zeros(&[4, 2])).unwrap();
        let zx = g.matmul(z, x).unwrap();
        assert!(g.value(zx).data().iter().all(|&v| v == 0.0));

        assert!(matches!(g.matmul(x, x), Err(WetError::Dimension { .. })));
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::eval();
        let a = g
            .constant(Tensor::new(&[1, 4], vec![0.7; 4]).unwrap())
            .unwrap();
        let s = g.softmax_rows(a).unwrap();
        for &v in g.value(s).data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let b = g.constant(mat(&[&[0.0, 3f64.ln()]])).unwrap();
        let s = g.softmax_rows(b).unwrap();
        assert!((g.value(s).at(0, 0) - 0.25).abs() < 1e-12);
        assert!((g.value(s).at(0, 1) - 0.75).abs() < 1e-12);
        let shifted = g.add_scalar(b, 123.0).unwrap();
        let s2 = g.softmax_rows(shifted).unwrap();
        assert!(g.value(s).max_abs_diff(g.value(s2)) < 1e-12);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut g = Graph::eval();
        assert!(matches!(
            g.constant(Tensor::vector(vec![f64::NAN])),
            Err(WetError::Numeric { .. })
        ));
    }

    #[test]
    fn simple_gradients() {
        let mut g = Graph::new(true);
        let x = g.tracked(Tensor::vector(vec![1.0, -2.0, 3.0])).unwrap();
        let s = g.sum(x).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);

        let mut g = Graph::new(true);
        let x = g.tracked(Tensor::scalar(3.0)).unwrap();
        let sq = g.mul(x, x).unwrap();
        let grads = g.backward(sq).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn backward_accumulates_into_store() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![2.0]));
        for _ in 0..2 {
            let mut g = Graph::new(true);
            let v = g.param(&store, w);
            let sq = g.mul(v, v).unwrap();
            let s = g.sum(sq).unwrap();
            g.backward_into(s, &mut store).unwrap();
        }
        assert_eq!(store.grad(w).unwrap().item(), 8.0);
        store.zero_grad();
        assert!(store.grad(w).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new(true);
        let x = g.tracked(Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut g = Graph::new(true);
        let x = g.constant(Tensor::ones(&[10])).unwrap();
        assert_eq!(g.dropout(x, 0.0, 1).unwrap(), x);
        assert!(g.dropout(x, 1.0, 1).is_err());
        let mut ev = Graph::eval();
        let y = ev.constant(Tensor::ones(&[10])).unwrap();
        assert_eq!(ev.dropout(y, 0.7, 1).unwrap(), y);
    }

    #[test]
    fn dropout_is_seeded() {
        let run = |seed| {
            let mut g = Graph::new(true);
            let x = g.constant(Tensor::ones(&[64])).unwrap();
            let d = g.dropout(x, 0.5, seed).unwrap();
            g.value(d).clone()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn relative_bias_layout() {
        let mut g = Graph::eval();
        let t = g
            .constant(Tensor::vector(vec![10.0, 20.0, 30.0, 40.0, 50.0]))
            .unwrap();
        let b = g.relative_bias(t, 2).unwrap();
        // offset i-j = 0 maps to the centre entry
        assert_eq!(g.value(b).data(), &[30.0, 20.0, 40.0, 30.0]);
        assert!(g.relative_bias(t, 4).is_err());
    }
}
