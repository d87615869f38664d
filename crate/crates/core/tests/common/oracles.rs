//! Independent reference implementations used as test oracles, and the
//! reduction and equivalence checks built on them.

use statrs::function::beta::beta_reg;
use wet_core::attention::{
    erpe_attention, kernel_attention, multi_head, prob_sparse_attention, prob_sparse_measure,
    scaled_dot_attention, top_queries, AttentionInputs, BiasPlacement, HeadProjections,
    ProbSparseConfig,
};
use wet_core::branches::supervised_transform;
use wet_core::ela::{Ela, PoolNormalization};
use wet_core::encodings::{sinusoidal_pe, tape_pe, EncodingKind, PositionalEncodingSpec};
use wet_core::ensemble::{average_outputs, weighted_combine, EnsembleWeights};
use wet_core::eval::{metrics, paired_t_test, ConfusionMatrix};
use wet_core::numerics::{Graph, ParamStore, Tensor};

use super::{close, rand_tensor, rng, Outcome};

pub const IDENTITY_TOL: f64 = 1e-9;

/// Row-wise softmax attention written with plain loops.
pub fn naive_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Tensor {
    let (l, dk, dv) = (q.rows(), q.cols(), v.cols());
    let mut out = vec![0.0; l * dv];
    for i in 0..l {
        let s: Vec<f64> = (0..l)
            .map(|j| (0..dk).map(|c| q.at(i, c) * k.at(j, c)).sum::<f64>() / (dk as f64).sqrt())
            .collect();
        let m = s.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = e.iter().sum();
        for j in 0..l {
            for c in 0..dv {
                out[i * dv + c] += e[j] / z * v.at(j, c);
            }
        }
    }
    Tensor::new(&[l, dv], out).unwrap()
}

/// Dispersion measure evaluated term by term without log-sum-exp.
pub fn naive_measure(q: &Tensor, k: &Tensor) -> Vec<f64> {
    (0..q.rows())
        .map(|i| {
            let e: Vec<f64> = (0..k.rows())
                .map(|j| {
                    ((0..q.cols()).map(|c| q.at(i, c) * k.at(j, c)).sum::<f64>() / 2f64.sqrt())
                        .exp()
                })
                .collect();
            let sum: f64 = e.iter().sum();
            sum.ln() - sum / k.rows() as f64
        })
        .collect()
}

/// The size-`u` subset with the largest total measure, found by enumerating
/// every subset.
pub fn exhaustive_top(measure: &[f64], u: usize) -> Vec<usize> {
    fn rec(m: &[f64], u: usize, start: usize, cur: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
        if cur.len() == u {
            let s: f64 = cur.iter().map(|&i| m[i]).sum();
            if s > best.0 {
                *best = (s, cur.clone());
            }
            return;
        }
        for i in start..m.len() {
            if m.len() - i < u - cur.len() {
                break;
            }
            cur.push(i);
            rec(m, u, i + 1, cur, best);
            cur.pop();
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    rec(measure, u, 0, &mut Vec::new(), &mut best);
    best.1
}

fn mat_affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (m, n, p) = (x.rows(), x.cols(), w.cols());
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        for j in 0..p {
            out[i * p + j] = b.data()[j] + (0..n).map(|k| x.at(i, k) * w.at(k, j)).sum::<f64>();
        }
    }
    Tensor::new(&[m, p], out).unwrap()
}

fn cols(x: &Tensor, start: usize, len: usize) -> Tensor {
    let data = (0..x.rows())
        .flat_map(|i| x.row(i)[start..start + len].to_vec())
        .collect();
    Tensor::new(&[x.rows(), len], data).unwrap()
}

/// Two-head attention wired by hand: project, split the columns in half,
/// attend per head, concatenate, project out.
pub fn hand_two_head(x: &Tensor, w: &[Tensor; 4], b: &[Tensor; 4]) -> Tensor {
    let q = mat_affine(x, &w[0], &b[0]);
    let k = mat_affine(x, &w[1], &b[1]);
    let v = mat_affine(x, &w[2], &b[2]);
    let dh = q.cols() / 2;
    let h0 = naive_attention(&cols(&q, 0, dh), &cols(&k, 0, dh), &cols(&v, 0, dh));
    let h1 = naive_attention(&cols(&q, dh, dh), &cols(&k, dh, dh), &cols(&v, dh, dh));
    let cat: Vec<f64> = (0..x.rows())
        .flat_map(|i| {
            h0.row(i)
                .iter()
                .chain(h1.row(i))
                .copied()
                .collect::<Vec<_>>()
        })
        .collect();
    mat_affine(
        &Tensor::new(&[x.rows(), 2 * dh], cat).unwrap(),
        &w[3],
        &b[3],
    )
}

/// `t = mean(d) / (sd(d) / sqrt(n))`, two-sided `p` from the regularised
/// incomplete beta function.
pub fn direct_t_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = mean / (var.sqrt() / n.sqrt());
    let df = n - 1.0;
    (t, beta_reg(df / 2.0, 0.5, df / (df + t * t)))
}

fn graph_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    f: impl Fn(&mut Graph, &AttentionInputs) -> wet_core::Result<wet_core::numerics::Var>,
) -> Tensor {
    let mut g = Graph::eval();
    let inp = AttentionInputs::new(
        g.constant(q.clone()).unwrap(),
        g.constant(k.clone()).unwrap(),
        g.constant(v.clone()).unwrap(),
    );
    let y = f(&mut g, &inp).unwrap();
    g.value(y).clone()
}

/// Zero-bias eRPE, ProbSparse at `u = L`, tAPE at `L = d_model`, uniform
/// weighting, and saturated ELA.
pub fn reductions() -> Vec<Outcome> {
    let mut out = Vec::new();
    for (i, l) in [1usize, 3, 7, 12].into_iter().enumerate() {
        let mut r = rng(100 + i as u64);
        let (q, k, v) = (
            rand_tensor(&[l, 4], -2.0, 2.0, &mut r),
            rand_tensor(&[l, 4], -2.0, 2.0, &mut r),
            rand_tensor(&[l, 3], -2.0, 2.0, &mut r),
        );
        let full = graph_attention(&q, &k, &v, scaled_dot_attention);
        out.push(close(
            &format!("scaled dot == loop reference (L={l})"),
            &full,
            &naive_attention(&q, &k, &v),
            IDENTITY_TOL,
        ));
        for placement in [BiasPlacement::PostSoftmax, BiasPlacement::PreSoftmax] {
            let zero = Tensor::zeros(&[2 * l - 1]);
            let e = graph_attention(&q, &k, &v, |g, inp| {
                let b = g.constant(zero.clone())?;
                erpe_attention(g, inp, b, placement)
            });
            out.push(close(
                &format!("eRPE zero bias {placement:?} == scaled dot (L={l})"),
                &e,
                &full,
                IDENTITY_TOL,
            ));
        }
        // c large enough that ceil(c ln L) >= L
        let sparse = ProbSparseConfig {
            sampling_factor: 50.0,
        };
        assert_eq!(sparse.selected_count(l), l);
        let p = graph_attention(&q, &k, &v, |g, inp| prob_sparse_attention(g, inp, &sparse));
        out.push(close(
            &format!("ProbSparse u=L == full (L={l})"),
            &p,
            &naive_attention(&q, &k, &v),
            IDENTITY_TOL,
        ));
    }
    for d in [2usize, 4, 8, 16, 32, 64] {
        let tape = tape_pe(&PositionalEncodingSpec::new(EncodingKind::Tape, d, d)).unwrap();
        let sin =
            sinusoidal_pe(&PositionalEncodingSpec::new(EncodingKind::Sinusoidal, d, d)).unwrap();
        out.push(close(
            &format!("tAPE(L=d={d}) == sinusoidal"),
            &tape,
            &sin,
            IDENTITY_TOL,
        ));
    }
    for n in [1usize, 2, 5, 9] {
        let mut r = rng(200 + n as u64);
        let outputs: Vec<Vec<f64>> = (0..n)
            .map(|_| rand_tensor(&[6], 0.0, 1.0, &mut r).into_data())
            .collect();
        let w = weighted_combine(&outputs, &EnsembleWeights::uniform(n)).unwrap();
        let a = average_outputs(&outputs).unwrap();
        out.push(close(
            &format!("uniform weighted_combine == average ({n} branches)"),
            &Tensor::vector(w),
            &Tensor::vector(a),
            1e-12,
        ));
    }
    for (c, r_, l) in [(4usize, 1usize, 6usize), (8, 2, 5), (16, 4, 9)] {
        let mut store = ParamStore::new();
        let ela = Ela::new(
            &mut store,
            "ela",
            c,
            r_,
            PoolNormalization::CrossDimension,
            &mut rng(300 + c as u64),
        )
        .unwrap();
        for gate in [&ela.gate_h, &ela.gate_w] {
            store
                .value_mut(gate.gn_gamma)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
            store
                .value_mut(gate.gn_beta)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 40.0);
        }
        let x = rand_tensor(&[l, c], -3.0, 3.0, &mut rng(301));
        let mut g = Graph::eval();
        let xv = g.constant(x.clone()).unwrap();
        let y = ela.forward_sequence(&mut g, &store, xv).unwrap();
        out.push(close(
            &format!("saturated ELA == identity (C={c})"),
            g.value(y),
            &x,
            1e-6,
        ));
    }
    out
}

/// Query selection, two-head wiring, t-test, and window shapes against
/// independent references.
pub fn equivalences() -> Vec<Outcome> {
    let mut out = Vec::new();
    let mut selection_ok = Ok(());
    'outer: for l in 2..=16usize {
        for c in [0.5, 1.0, 2.0, 3.0] {
            let cfg = ProbSparseConfig { sampling_factor: c };
            let u = cfg.selected_count(l);
            let mut r = rng(400 + l as u64);
            let (q, k) = (
                rand_tensor(&[l, 3], -2.0, 2.0, &mut r),
                rand_tensor(&[l, 3], -2.0, 2.0, &mut r),
            );
            let m = prob_sparse_measure(&q, &k).unwrap();
            let naive = naive_measure(&q, &k);
            if Tensor::vector(naive.clone()).max_abs_diff(&m) > IDENTITY_TOL {
                selection_ok = Err(format!("measure differs from direct evaluation at L={l}"));
                break 'outer;
            }
            let got = top_queries(m.data(), u);
            let want = exhaustive_top(&naive, u);
            if got != want {
                selection_ok = Err(format!(
                    "L={l} c={c}: selected {got:?}, exhaustive {want:?}"
                ));
                break 'outer;
            }
        }
    }
    out.push((
        "ProbSparse selection == exhaustive top-u (L<=16)".into(),
        selection_ok,
    ));

    // selected rows attend fully, the rest take the mean of V
    let mut r = rng(450);
    let (q, k, v) = (
        rand_tensor(&[10, 4], -2.0, 2.0, &mut r),
        rand_tensor(&[10, 4], -2.0, 2.0, &mut r),
        rand_tensor(&[10, 3], -2.0, 2.0, &mut r),
    );
    let cfg = ProbSparseConfig {
        sampling_factor: 1.0,
    };
    let sparse = graph_attention(&q, &k, &v, |g, inp| prob_sparse_attention(g, inp, &cfg));
    let chosen = exhaustive_top(&naive_measure(&q, &k), cfg.selected_count(10));
    let full = naive_attention(&q, &k, &v);
    let mut expect = vec![0.0; 30];
    for i in 0..10 {
        for c in 0..3 {
            expect[i * 3 + c] = if chosen.contains(&i) {
                full.at(i, c)
            } else {
                (0..10).map(|j| v.at(j, c)).sum::<f64>() / 10.0
            };
        }
    }
    out.push(close(
        "ProbSparse rows: active == full, lazy == mean(V)",
        &sparse,
        &Tensor::new(&[10, 3], expect).unwrap(),
        IDENTITY_TOL,
    ));

    for seed in 0..5u64 {
        let mut r = rng(500 + seed);
        let x = rand_tensor(&[5, 6], -2.0, 2.0, &mut r);
        let w: [Tensor; 4] = std::array::from_fn(|_| rand_tensor(&[6, 6], -0.7, 0.7, &mut r));
        let b: [Tensor; 4] = std::array::from_fn(|_| rand_tensor(&[6], -0.5, 0.5, &mut r));
        let mut g = Graph::eval();
        let xv = g.constant(x.clone()).unwrap();
        let wv: Vec<_> = w.iter().map(|t| g.constant(t.clone()).unwrap()).collect();
        let bv: Vec<_> = b.iter().map(|t| g.constant(t.clone()).unwrap()).collect();
        let proj = HeadProjections {
            wq: wv[0],
            wk: wv[1],
            wv: wv[2],
            wo: wv[3],
            bq: Some(bv[0]),
            bk: Some(bv[1]),
            bv: Some(bv[2]),
            bo: Some(bv[3]),
        };
        let y = multi_head(
            &mut g,
            &AttentionInputs::new(xv, xv, xv),
            2,
            &proj,
            |g, h, _| scaled_dot_attention(g, h),
        )
        .unwrap();
        out.push(close(
            &format!("multi_head(2) == hand split-concat (seed {seed})"),
            g.value(y),
            &hand_two_head(&x, &w, &b),
            IDENTITY_TOL,
        ));
    }

    let kernel = {
        let mut r = rng(550);
        let (q, k, v) = (
            rand_tensor(&[6, 4], -2.0, 2.0, &mut r),
            rand_tensor(&[6, 4], -2.0, 2.0, &mut r),
            rand_tensor(&[6, 2], -2.0, 2.0, &mut r),
        );
        let kern = kernel_attention(&q, &k, &v, |a, b| {
            (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / 2.0).exp()
        })
        .unwrap();
        close(
            "kernel form with exp(q.k/sqrt(d)) == scaled dot",
            &kern,
            &naive_attention(&q, &k, &v),
            IDENTITY_TOL,
        )
    };
    out.push(kernel);

    let mut t_ok = Ok(());
    for n in 5..=50usize {
        let mut r = rng(600 + n as u64);
        let a = rand_tensor(&[n], 0.5, 1.0, &mut r).into_data();
        let b = rand_tensor(&[n], 0.5, 1.0, &mut r).into_data();
        let got = paired_t_test(&a, &b).unwrap();
        let (t, p) = direct_t_test(&a, &b);
        if (got.t - t).abs() > IDENTITY_TOL * t.abs().max(1.0)
            || (got.p_value - p).abs() > IDENTITY_TOL
            || got.df != (n - 1) as f64
        {
            t_ok = Err(format!(
                "n={n}: t {} vs {t}, p {} vs {p}",
                got.t, got.p_value
            ));
            break;
        }
    }
    out.push(("paired t-test == direct formula (n=5..50)".into(), t_ok));

    let mut shape_ok = Ok(());
    'grid: for s in 1..=3usize {
        for w in 1..=4usize {
            for n_in in 0..=3usize {
                for n_out in 0..=3usize {
                    let t = w * (n_in + n_out) + 2;
                    let rec = Tensor::new(&[s, t], (0..s * t).map(|i| i as f64).collect()).unwrap();
                    let win = match supervised_transform(&rec, w, n_in, n_out) {
                        Ok(x) => x,
                        Err(e) => {
                            shape_ok = Err(format!("S={s} W={w} n_in={n_in} n_out={n_out}: {e}"));
                            break 'grid;
                        }
                    };
                    let want = [
                        (win.lagged.shape(), w * n_in),
                        (win.forecast.shape(), w * n_out),
                        (win.transformed.shape(), w * (n_in + n_out)),
                    ];
                    if want.iter().any(|(sh, c)| *sh != [s, *c]) {
                        shape_ok = Err(format!(
                            "S={s} W={w} n_in={n_in} n_out={n_out}: got {:?}",
                            want.map(|(sh, _)| sh.to_vec())
                        ));
                        break 'grid;
                    }
                }
            }
        }
    }
    out.push((
        "supervised_transform shapes over S,W,n grid".into(),
        shape_ok,
    ));
    out
}

/// Confusion matrices with accuracy, precision, recall, F1 worked out by hand.
pub type Counts = (u64, u64, u64, u64);
pub type Scores = (f64, f64, f64, f64);

pub const HAND_METRICS: [(Counts, Scores); 12] = [
    // (tp, fp, tn, fn) -> (accuracy, precision, recall, f1)
    ((50, 0, 50, 0), (1.0, 1.0, 1.0, 1.0)),
    ((30, 2, 28, 0), (58.0 / 60.0, 30.0 / 32.0, 1.0, 60.0 / 62.0)),
    ((8, 2, 6, 4), (14.0 / 20.0, 0.8, 8.0 / 12.0, 16.0 / 22.0)),
    ((1, 1, 1, 1), (0.5, 0.5, 0.5, 0.5)),
    ((9, 1, 0, 0), (0.9, 0.9, 1.0, 18.0 / 19.0)),
    ((0, 0, 10, 5), (10.0 / 15.0, 0.0, 0.0, 0.0)),
    ((5, 5, 0, 0), (0.5, 0.5, 1.0, 10.0 / 15.0)),
    ((3, 1, 4, 2), (0.7, 0.75, 0.6, 2.0 / 3.0)),
    ((45, 5, 40, 10), (0.85, 0.9, 45.0 / 55.0, 90.0 / 105.0)),
    ((7, 3, 7, 3), (0.7, 0.7, 0.7, 0.7)),
    (
        (100, 20, 60, 20),
        (0.8, 100.0 / 120.0, 100.0 / 120.0, 100.0 / 120.0),
    ),
    ((2, 8, 88, 2), (0.9, 0.2, 0.5, 4.0 / 14.0)),
];

pub fn metric_identities() -> Vec<Outcome> {
    let mut out = Vec::new();
    for ((tp, fp, tn, fn_), (acc, p, r, f1)) in HAND_METRICS {
        let got = metrics(&ConfusionMatrix::new(tp, fp, tn, fn_)).unwrap();
        let got_v = [got.accuracy, got.precision, got.recall, got.f1];
        let want = [acc, p, r, f1];
        let ok = got_v.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-12);
        let res = if ok {
            Ok(())
        } else {
            Err(format!("got {got_v:?}, want {want:?}"))
        };
        out.push((
            format!("hand metrics tp={tp} fp={fp} tn={tn} fn={fn_}"),
            res,
        ));
        if got.precision == got.recall && got.precision > 0.0 {
            let res = if got.f1 == got.precision {
                Ok(())
            } else {
                Err(format!("f1 {} != p {}", got.f1, got.precision))
            };
            out.push((format!("P=R => F1=P exactly ({tp},{fp},{tn},{fn_})"), res));
        }
    }
    out
}
