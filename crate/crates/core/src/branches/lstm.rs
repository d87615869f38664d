use rand_chacha::ChaCha8Rng;

use crate::error::{Result, WetError};
use crate::numerics::{Graph, ParamId, ParamStore, Var};

/// Single-layer LSTM. Gate blocks are laid out `[i | f | g | o]` along the
/// columns of the weight matrices.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    /// Glorot weights, zero bias except a forget-gate bias of 1.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w_x = store.add_glorot(format!("{name}.w_x"), input, 4 * hidden, rng);
        let w_h = store.add_glorot(format!("{name}.w_h"), hidden, 4 * hidden, rng);
        let bias = store.add_filled(format!("{name}.bias"), &[4 * hidden], 0.0);
        store.value_mut(bias).data_mut()[hidden..2 * hidden]
            .iter_mut()
            .for_each(|b| *b = 1.0);
        Lstm {
            w_x,
            w_h,
            bias,
            input,
            hidden,
        }
    }

    /// Runs over the rows of `x` (`[T, input]`) from zero state and returns
    /// the hidden states `[T, hidden]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.input || shape[0] == 0 {
            return Err(WetError::dim(
                "lstm",
                format!("expected [T>0, {}], got {shape:?}", self.input),
            ));
        }
        let d = self.hidden;
        let w_x = g.param(store, self.w_x);
        let w_h = g.param(store, self.w_h);
        let b = g.param(store, self.bias);
        // input contributions for every step at once
        let xw = g.matmul(x, w_x)?;
        let xw = g.add_row(xw, b)?;
        let mut h: Option<Var> = None;
        let mut c: Option<Var> = None;
        let mut outputs = Vec::with_capacity(shape[0]);
        for t in 0..shape[0] {
            let mut z = g.slice_rows(xw, t, 1)?;
            if let Some(h) = h {
                let hw = g.matmul(h, w_h)?;
                z = g.add(z, hw)?;
            }
            let i = g.slice_cols(z, 0, d)?;
            let i = g.sigmoid(i)?;
            let f = g.slice_cols(z, d, d)?;
            let f = g.sigmoid(f)?;
            let cand = g.slice_cols(z, 2 * d, d)?;
            let cand = g.tanh(cand)?;
            let o = g.slice_cols(z, 3 * d, d)?;
            let o = g.sigmoid(o)?;
            let ig = g.mul(i, cand)?;
            let c_new = match c {
                Some(c) => {
                    let kept = g.mul(f, c)?;
                    g.add(kept, ig)?
                }
                None => ig,
            };
            let ct = g.tanh(c_new)?;
            let h_new = g.mul(o, ct)?;
            outputs.push(h_new);
            h = Some(h_new);
            c = Some(c_new);
        }
        g.concat_rows(&outputs)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w_x, self.w_h, self.bias]
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::numerics::{sigmoid, Tensor};

    #[test]
    fn zero_parameters_give_zero_states() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lstm = Lstm::new(&mut store, "l", 2, 3, &mut rng);
        for id in lstm.param_ids() {
            store
                .value_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
        }
        let mut g = Graph::eval();
        let x = g.constant(Tensor::zeros(&[4, 2])).unwrap();
        let h = lstm.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.shape(h), &[4, 3]);
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_step_cell_arithmetic() {
        // hidden 1, input 1: z = x*wx + b for gates i, f, g, o
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lstm = Lstm::new(&mut store, "l", 1, 1, &mut rng);
        *store.value_mut(lstm.w_x) = Tensor::new(&[1, 4], vec![0.5, -0.3, 0.8, 0.2]).unwrap();
        *store.value_mut(lstm.w_h) = Tensor::new(&[1, 4], vec![0.1, 0.4, -0.6, 0.7]).unwrap();
        *store.value_mut(lstm.bias) = Tensor::vector(vec![0.05, 1.0, -0.1, 0.0]);
        let mut g = Graph::eval();
        let x = g
            .constant(Tensor::new(&[2, 1], vec![2.0, -1.0]).unwrap())
            .unwrap();
        let h = lstm.forward(&mut g, &store, x).unwrap();

        let step = |x: f64, h: f64, c: f64| {
            let i = sigmoid(x * 0.5 + h * 0.1 + 0.05);
            let f = sigmoid(x * -0.3 + h * 0.4 + 1.0);
            let gg = (x * 0.8 + h * -0.6 - 0.1).tanh();
            let o = sigmoid(x * 0.2 + h * 0.7);
            let c = f * c + i * gg;
            (o * c.tanh(), c)
        };
        let (h1, c1) = step(2.0, 0.0, 0.0);
        let (h2, _) = step(-1.0, h1, c1);
        assert!((g.value(h).data()[0] - h1).abs() < 1e-15);
        assert!((g.value(h).data()[1] - h2).abs() < 1e-15);
    }

    #[test]
    fn wrong_width_rejected() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lstm = Lstm::new(&mut store, "l", 3, 2, &mut rng);
        let mut g = Graph::eval();
        let x = g.constant(Tensor::zeros(&[4, 2])).unwrap();
        assert!(lstm.forward(&mut g, &store, x).is_err());
    }
}
