//! Central-difference checks over every differentiable operation.
//!
//! Each check reduces the op output to a scalar through a fixed random
//! weighting so that no gradient entry cancels by symmetry.

use wet_core::attention::{
    erpe_attention, multi_head, prob_sparse_attention, scaled_dot_attention, AttentionInputs,
    BiasPlacement, HeadProjections, ProbSparseConfig,
};
use wet_core::branches::Lstm;
use wet_core::config::{ModelConfig, WeightsMode};
use wet_core::ela::{CoordinateAttention, Ela, PoolNormalization};
use wet_core::ensemble::{ModelInput, WetModel};
use wet_core::numerics::{
    check_inputs, check_params, ActivationKind, GradCheckOptions, GradCheckReport, Graph, LossKind,
    ParamStore, Tensor, Var,
};
use wet_core::Result;

use super::{rand_tensor, rng, Outcome};

pub const OP_TOL: f64 = 1e-4;
pub const MODEL_TOL: f64 = 1e-3;

fn outcome(name: &str, r: Result<GradCheckReport>) -> Outcome {
    let r = match r {
        Ok(rep) if rep.passed && rep.checked > 0 => Ok(()),
        Ok(rep) => Err(format!(
            "max rel error {:.3e} (tol {:.0e}, {} entries)",
            rep.max_rel_error, rep.tol, rep.checked
        )),
        Err(e) => Err(e.to_string()),
    };
    (name.to_string(), r)
}

/// `sum(y * w)` with `w` drawn from `seed`.
fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let w = rand_tensor(g.shape(y), -1.0, 1.0, &mut rng(seed));
    let w = g.constant(w)?;
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn check<F>(name: &str, inputs: &[Tensor], tol: f64, f: F) -> Outcome
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    outcome(
        name,
        check_inputs(&f, inputs, GradCheckOptions::with_tol(tol)),
    )
}

fn check_training<F>(name: &str, inputs: &[Tensor], f: F) -> Outcome
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let opts = GradCheckOptions {
        training: true,
        ..GradCheckOptions::with_tol(OP_TOL)
    };
    outcome(name, check_inputs(&f, inputs, opts))
}

fn t(shape: &[usize], seed: u64) -> Tensor {
    rand_tensor(shape, -2.0, 2.0, &mut rng(seed))
}

pub fn activations() -> Vec<Outcome> {
    let x = t(&[4, 5], 1);
    let mut out = Vec::new();
    for kind in ActivationKind::all() {
        let name = format!("activation {kind}");
        if let ActivationKind::PReLU { alpha } = kind {
            out.push(check(
                &name,
                &[x.clone(), Tensor::vector(vec![alpha])],
                OP_TOL,
                |g, v| {
                    let y = g.prelu(v[0], v[1])?;
                    weighted_sum(g, y, 2)
                },
            ));
        } else {
            out.push(check(
                &name,
                std::slice::from_ref(&x),
                OP_TOL,
                move |g, v| {
                    let y = g.activation(v[0], kind)?;
                    weighted_sum(g, y, 2)
                },
            ));
        }
    }
    out.push(check(
        "sigmoid",
        std::slice::from_ref(&x),
        OP_TOL,
        |g, v| {
            let y = g.sigmoid(v[0])?;
            weighted_sum(g, y, 3)
        },
    ));
    out.push(check("tanh", &[x], OP_TOL, |g, v| {
        let y = g.tanh(v[0])?;
        weighted_sum(g, y, 4)
    }));
    out
}

pub fn losses() -> Vec<Outcome> {
    let pred = rand_tensor(&[6, 1], 0.05, 0.95, &mut rng(5));
    let target = Tensor::new(&[6, 1], vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
    let mut out = Vec::new();
    for kind in LossKind::all() {
        let (pred, target) = match kind {
            // rows are distributions for the categorical loss
            LossKind::CategoricalCrossentropy => (
                Tensor::new(&[2, 3], vec![0.2, 0.5, 0.3, 0.6, 0.1, 0.3]).unwrap(),
                Tensor::new(&[2, 3], vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0]).unwrap(),
            ),
            _ => (pred.clone(), target.clone()),
        };
        out.push(check(
            &format!("loss {kind}"),
            &[pred],
            OP_TOL,
            move |g, v| g.loss(kind, v[0], &target),
        ));
    }
    out
}

pub fn graph_ops() -> Vec<Outcome> {
    let a = t(&[3, 4], 10);
    let b = t(&[4, 2], 11);
    let c = t(&[3, 4], 12);
    let row = t(&[4], 13);
    let col = t(&[3], 14);
    let ws = |g: &mut Graph, y: Var| weighted_sum(g, y, 99);
    vec![
        check("matmul", &[a.clone(), b.clone()], OP_TOL, |g, v| {
            let y = g.matmul(v[0], v[1])?;
            ws(g, y)
        }),
        check("transpose", std::slice::from_ref(&a), OP_TOL, |g, v| {
            let y = g.transpose(v[0])?;
            ws(g, y)
        }),
        check("add", &[a.clone(), c.clone()], OP_TOL, |g, v| {
            let y = g.add(v[0], v[1])?;
            ws(g, y)
        }),
        check("sub", &[a.clone(), c.clone()], OP_TOL, |g, v| {
            let y = g.sub(v[0], v[1])?;
            ws(g, y)
        }),
        check("mul", &[a.clone(), c.clone()], OP_TOL, |g, v| {
            let y = g.mul(v[0], v[1])?;
            ws(g, y)
        }),
        check("add_row", &[a.clone(), row.clone()], OP_TOL, |g, v| {
            let y = g.add_row(v[0], v[1])?;
            ws(g, y)
        }),
        check("add_col", &[a.clone(), col.clone()], OP_TOL, |g, v| {
            let y = g.add_col(v[0], v[1])?;
            ws(g, y)
        }),
        check("mul_col", &[a.clone(), col.clone()], OP_TOL, |g, v| {
            let y = g.mul_col(v[0], v[1])?;
            ws(g, y)
        }),
        check(
            "scale and add_scalar",
            std::slice::from_ref(&a),
            OP_TOL,
            |g, v| {
                let y = g.scale(v[0], -1.7)?;
                let y = g.add_scalar(y, 0.3)?;
                ws(g, y)
            },
        ),
        check("mean", std::slice::from_ref(&a), OP_TOL, |g, v| {
            let y = g.mul(v[0], v[0])?;
            g.mean(y)
        }),
        check("mean_rows", std::slice::from_ref(&a), OP_TOL, |g, v| {
            let y = g.mean_rows(v[0])?;
            ws(g, y)
        }),
        check("softmax_rows", std::slice::from_ref(&a), OP_TOL, |g, v| {
            let y = g.softmax_rows(v[0])?;
            ws(g, y)
        }),
        check("reshape", std::slice::from_ref(&a), OP_TOL, |g, v| {
            let y = g.reshape(v[0], &[2, 6])?;
            ws(g, y)
        }),
        check("concat_cols", &[a.clone(), c.clone()], OP_TOL, |g, v| {
            let y = g.concat_cols(&[v[0], v[1]])?;
            ws(g, y)
        }),
        check("concat_rows", &[a.clone(), c.clone()], OP_TOL, |g, v| {
            let y = g.concat_rows(&[v[0], v[1]])?;
            ws(g, y)
        }),
        check("slice_cols", std::slice::from_ref(&a), OP_TOL, |g, v| {
            let y = g.slice_cols(v[0], 1, 2)?;
            ws(g, y)
        }),
        check("slice_rows", std::slice::from_ref(&a), OP_TOL, |g, v| {
            let y = g.slice_rows(v[0], 1, 2)?;
            ws(g, y)
        }),
        check("gather_rows", std::slice::from_ref(&a), OP_TOL, |g, v| {
            let y = g.gather_rows(v[0], &[2, 0, 2])?;
            ws(g, y)
        }),
        check(
            "layer_norm",
            &[a.clone(), row.clone(), t(&[4], 15)],
            OP_TOL,
            |g, v| {
                let y = g.layer_norm(v[0], v[1], v[2])?;
                ws(g, y)
            },
        ),
        check(
            "group_norm",
            &[t(&[4, 3], 16), t(&[4], 17), t(&[4], 18)],
            OP_TOL,
            |g, v| {
                let y = g.group_norm(v[0], v[1], v[2], 2)?;
                ws(g, y)
            },
        ),
        check("relative_bias", &[t(&[7], 19)], OP_TOL, |g, v| {
            let y = g.relative_bias(v[0], 3)?;
            ws(g, y)
        }),
        check_training("dropout", &[a], |g, v| {
            let y = g.dropout(v[0], 0.4, 7)?;
            ws(g, y)
        }),
    ]
}

pub fn attention() -> Vec<Outcome> {
    let (q, k, v) = (t(&[5, 4], 20), t(&[5, 4], 21), t(&[5, 3], 22));
    let ws = |g: &mut Graph, y: Var| weighted_sum(g, y, 98);
    let mut out = vec![check(
        "scaled_dot_attention",
        &[q.clone(), k.clone(), v.clone()],
        OP_TOL,
        |g, x| {
            let y = scaled_dot_attention(g, &AttentionInputs::new(x[0], x[1], x[2]))?;
            ws(g, y)
        },
    )];
    for placement in [BiasPlacement::PostSoftmax, BiasPlacement::PreSoftmax] {
        let inputs = [q.clone(), k.clone(), v.clone(), t(&[9], 23)];
        out.push(check(
            &format!("erpe_attention {placement:?}"),
            &inputs,
            OP_TOL,
            move |g, x| {
                let y =
                    erpe_attention(g, &AttentionInputs::new(x[0], x[1], x[2]), x[3], placement)?;
                ws(g, y)
            },
        ));
    }
    // c = 1 at L = 12 selects ceil(ln 12) = 3 queries
    let sparse = ProbSparseConfig {
        sampling_factor: 1.0,
    };
    let inputs = [t(&[12, 4], 24), t(&[12, 4], 25), t(&[12, 3], 26)];
    out.push(check(
        "prob_sparse_attention",
        &inputs,
        OP_TOL,
        move |g, x| {
            let y = prob_sparse_attention(g, &AttentionInputs::new(x[0], x[1], x[2]), &sparse)?;
            ws(g, y)
        },
    ));
    let x = t(&[5, 4], 27);
    let mats: Vec<Tensor> = (0..4)
        .map(|i| rand_tensor(&[4, 4], -0.8, 0.8, &mut rng(30 + i)))
        .collect();
    let biases: Vec<Tensor> = (0..4).map(|i| t(&[4], 40 + i)).collect();
    let mut inputs = vec![x];
    inputs.extend(mats);
    inputs.extend(biases);
    out.push(check(
        "multi_head(2, scaled dot)",
        &inputs,
        OP_TOL,
        |g, v| {
            let proj = HeadProjections {
                wq: v[1],
                wk: v[2],
                wv: v[3],
                wo: v[4],
                bq: Some(v[5]),
                bk: Some(v[6]),
                bv: Some(v[7]),
                bo: Some(v[8]),
            };
            let y = multi_head(
                g,
                &AttentionInputs::new(v[0], v[0], v[0]),
                2,
                &proj,
                |g, h, _| scaled_dot_attention(g, h),
            )?;
            ws(g, y)
        },
    ));
    out
}

fn perturb_store(store: &mut ParamStore, seed: u64) {
    // move gates and norms off their symmetric initial values
    let ids: Vec<_> = store.ids().collect();
    for (i, id) in ids.into_iter().enumerate() {
        let shape = store.value(id).shape().to_vec();
        let noise = rand_tensor(&shape, -0.5, 0.5, &mut rng(seed + i as u64));
        store.value_mut(id).add_assign(&noise);
    }
}

pub fn ela() -> Vec<Outcome> {
    let mut out = Vec::new();
    for pooling in [
        PoolNormalization::CrossDimension,
        PoolNormalization::CorrectedMean,
    ] {
        let mut store = ParamStore::new();
        let ela = Ela::new(&mut store, "ela", 8, 2, pooling, &mut rng(50)).unwrap();
        perturb_store(&mut store, 51);
        let x = t(&[6, 8], 52);
        let ids = ela.param_ids();
        {
            let (ela, store) = (&ela, &store);
            out.push(check(
                &format!("ela input {pooling:?}"),
                std::slice::from_ref(&x),
                OP_TOL,
                move |g, v| {
                    let y = ela.forward_sequence(g, store, v[0])?;
                    weighted_sum(g, y, 53)
                },
            ));
        }
        let ela_ref = &ela;
        let xr = &x;
        let r = check_params(
            &store,
            &ids,
            |g, s| {
                let x = g.constant(xr.clone())?;
                let y = ela_ref.forward_sequence(g, s, x)?;
                weighted_sum(g, y, 53)
            },
            GradCheckOptions::with_tol(OP_TOL),
        );
        out.push(outcome(&format!("ela params {pooling:?}"), r));
    }

    let mut store = ParamStore::new();
    let ca = CoordinateAttention::new(&mut store, "ca", 8, 2, ActivationKind::Tanh, &mut rng(54))
        .unwrap();
    perturb_store(&mut store, 55);
    let x = t(&[6, 8], 56);
    let (ca_ref, store_ref) = (&ca, &store);
    out.push(check_training(
        "coordinate attention (batch norm) input",
        &[x],
        move |g, v| {
            let mut ca = ca_ref.clone();
            let fm = wet_core::ela::FeatureMap::from_sequence(g, v[0])?;
            let y = ca.forward(g, store_ref, &fm)?.to_sequence(g)?;
            weighted_sum(g, y, 57)
        },
    ));
    out
}

pub fn lstm() -> Vec<Outcome> {
    let mut store = ParamStore::new();
    let cell = Lstm::new(&mut store, "lstm", 3, 4, &mut rng(60));
    let x = t(&[5, 3], 61);
    let (cell_ref, store_ref) = (&cell, &store);
    let input = check(
        "lstm input",
        std::slice::from_ref(&x),
        OP_TOL,
        move |g, v| {
            let h = cell_ref.forward(g, store_ref, v[0])?;
            weighted_sum(g, h, 62)
        },
    );
    let ids = cell.param_ids();
    let xr = &x;
    let params = check_params(
        &store,
        &ids,
        |g, s| {
            let x = g.constant(xr.clone())?;
            let h = cell_ref.forward(g, s, x)?;
            weighted_sum(g, h, 62)
        },
        GradCheckOptions::with_tol(OP_TOL),
    );
    vec![input, outcome("lstm params", params)]
}

/// Toy configuration for the end-to-end check: `L = 6`, `d_model = 8`.
pub fn toy_model_config() -> ModelConfig {
    ModelConfig {
        d_emb: 4,
        d_model: 8,
        d_repr: 8,
        heads: 2,
        max_seq_len: 6,
        ela_reduction: 2,
        fc_width: 6,
        ..ModelConfig::default()
    }
}

pub fn toy_input(seed: u64) -> ModelInput {
    let tokens = rand_tensor(&[6, 4], -1.0, 1.0, &mut rng(seed));
    let sequence = wet_core::branches::EmbeddedSequence::unpadded(tokens).unwrap();
    let f = rand_tensor(&[7], -1.5, 1.5, &mut rng(seed + 1));
    ModelInput {
        sequence,
        features: f.data().try_into().unwrap(),
    }
}

pub fn full_model() -> Vec<Outcome> {
    let mut out = Vec::new();
    for mode in [WeightsMode::ValidationDerived, WeightsMode::Learned] {
        let model = WetModel::new(toy_model_config(), mode, 70).unwrap();
        let input = toy_input(71);
        let target = Tensor::new(&[1, 1], vec![1.0]).unwrap();
        let ids = model.param_ids();
        let opts = GradCheckOptions {
            max_entries_per_tensor: Some(4),
            ..GradCheckOptions::with_tol(MODEL_TOL)
        };
        let r = check_params(
            &model.store,
            &ids,
            |g, s| {
                let mut m = model.clone();
                m.store = s.clone();
                let fv = m.forward(g, &input, 0)?;
                let mut total = g.loss(LossKind::BinaryCrossentropy, fv.combined, &target)?;
                for p in fv.branch_probs {
                    let l = g.loss(LossKind::BinaryCrossentropy, p, &target)?;
                    total = g.add(total, l)?;
                }
                Ok(total)
            },
            opts,
        );
        out.push(outcome(
            &format!(
                "full model ({}, {} params)",
                mode.name(),
                model.param_count()
            ),
            r,
        ));
    }
    out
}

pub fn all() -> Vec<Outcome> {
    let mut out = activations();
    out.extend(losses());
    out.extend(graph_ops());
    out.extend(attention());
    out.extend(ela());
    out.extend(lstm());
    out.extend(full_model());
    out
}
