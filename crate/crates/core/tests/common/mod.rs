//! Helpers shared by the integration test binaries.
// reference implementations are written as plain index loops
#![allow(dead_code, clippy::needless_range_loop)]

pub mod gradients;
pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wet_core::numerics::Tensor;

pub fn rand_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A named check outcome: `Err` carries the reason for failure.
pub type Outcome = (String, Result<(), String>);

pub fn summarize(outcomes: &[Outcome]) -> Result<(), String> {
    let failed: Vec<String> = outcomes
        .iter()
        .filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}")))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(failed.join("; "))
    }
}

pub fn close(name: &str, a: &Tensor, b: &Tensor, tol: f64) -> Outcome {
    let r = if a.shape() != b.shape() {
        Err(format!("shapes {:?} vs {:?}", a.shape(), b.shape()))
    } else {
        let d = a.max_abs_diff(b);
        if d <= tol {
            Ok(())
        } else {
            Err(format!("max abs diff {d:e} > {tol:e}"))
        }
    };
    (name.to_string(), r)
}
