//! Central-difference verification of analytic gradients.
//!
//! Relative error per entry is `|a - n| / max(|a|, |n|, floor)`; the floor
//! keeps entries whose true gradient is essentially zero from dominating
//! through rounding noise.

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Result, WetError};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tol: f64,
    pub floor: f64,
    /// Build graphs in training mode (dropout masks stay fixed by their seeds).
    pub training: bool,
    /// Check at most this many entries per tensor, evenly strided.
    pub max_entries_per_tensor: Option<usize>,
}

impl GradCheckOptions {
    pub fn with_tol(tol: f64) -> Self {
        GradCheckOptions {
            tol,
            ..Self::default()
        }
    }
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tol: 1e-4,
            floor: 1e-6,
            training: false,
            max_entries_per_tensor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor index, flat entry)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Compares backward gradients of `f` with respect to each input against
/// central differences.
pub fn finite_difference_check<F>(f: F, inputs: &[Tensor], tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    check_inputs(&f, inputs, GradCheckOptions::with_tol(tol))
}

pub fn check_inputs<F>(f: &F, inputs: &[Tensor], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new(opts.training);
    let vars = inputs
        .iter()
        .map(|t| g.tracked(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut g, &vars)?;
    require_scalar(&g, out)?;
    let grads = g.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            grads
                .get(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect();

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new(opts.training);
        let vars = xs
            .iter()
            .map(|t| g.constant(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };
    let mut work = inputs.to_vec();
    let numeric = numeric_gradient(&mut work, opts, |xs| eval(xs))?;
    Ok(compare(&analytic, &numeric, opts))
}

/// Gradient check over the entries of stored parameters.
pub fn check_params<F>(
    store: &ParamStore,
    ids: &[ParamId],
    f: F,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new(opts.training);
    let out = f(&mut g, store)?;
    require_scalar(&g, out)?;
    let mut scratch = store.clone();
    scratch.zero_grad();
    g.backward_into(out, &mut scratch)?;
    let analytic: Vec<Tensor> = ids
        .iter()
        .map(|&id| {
            scratch
                .grad(id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(store.value(id).shape()))
        })
        .collect();

    let mut values: Vec<Tensor> = ids.iter().map(|&id| store.value(id).clone()).collect();
    let numeric = numeric_gradient(&mut values, opts, |xs| {
        for (&id, x) in ids.iter().zip(xs) {
            *scratch.value_mut(id) = x.clone();
        }
        let mut g = Graph::new(opts.training);
        let out = f(&mut g, &scratch)?;
        Ok(g.value(out).item())
    })?;
    Ok(compare(&analytic, &numeric, opts))
}

fn require_scalar(g: &Graph, out: Var) -> Result<()> {
    if g.value(out).len() != 1 {
        return Err(WetError::invalid(format!(
            "gradient check needs a scalar function, got shape {:?}",
            g.shape(out)
        )));
    }
    Ok(())
}

/// Central differences of `eval` at `xs`; unchecked entries are NaN.
pub fn numeric_gradient(
    xs: &mut [Tensor],
    opts: GradCheckOptions,
    mut eval: impl FnMut(&[Tensor]) -> Result<f64>,
) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(xs.len());
    for t in 0..xs.len() {
        let len = xs[t].len();
        let mut grad = Tensor::filled(xs[t].shape(), f64::NAN);
        for k in sample_entries(len, opts.max_entries_per_tensor) {
            let orig = xs[t].data()[k];
            xs[t].data_mut()[k] = orig + opts.step;
            let plus = eval(xs)?;
            xs[t].data_mut()[k] = orig - opts.step;
            let minus = eval(xs)?;
            xs[t].data_mut()[k] = orig;
            grad.data_mut()[k] = (plus - minus) / (2.0 * opts.step);
        }
        out.push(grad);
    }
    Ok(out)
}

fn sample_entries(len: usize, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(c) if c < len => {
            let stride = len as f64 / c as f64;
            (0..c).map(|i| (i as f64 * stride) as usize).collect()
        }
        _ => (0..len).collect(),
    }
}

/// Compares analytic and numeric gradients, skipping NaN (unchecked) entries.
pub fn compare(analytic: &[Tensor], numeric: &[Tensor], opts: GradCheckOptions) -> GradCheckReport {
    let mut worst = None;
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    for (t, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        for (k, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            if nv.is_nan() {
                continue;
            }
            checked += 1;
            let rel = (av - nv).abs() / av.abs().max(nv.abs()).max(opts.floor);
            if rel > max_rel || worst.is_none() {
                max_rel = max_rel.max(rel);
                worst = Some((t, k));
            }
        }
    }
    GradCheckReport {
        max_rel_error: max_rel,
        worst,
        checked,
        tol: opts.tol,
        passed: max_rel <= opts.tol,
    }
}
