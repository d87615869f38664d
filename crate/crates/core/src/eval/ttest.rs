use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Result, WetError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    /// Infinite when the differences have zero spread and nonzero mean.
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub mean_diff: f64,
    /// Set when the differences have zero spread.
    pub degenerate: bool,
}

/// Two-sided paired Student's t-test on `a - b` with `n - 1` degrees of
/// freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(WetError::invalid(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(WetError::invalid("paired t-test needs at least two pairs"));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(WetError::numeric("paired_t_test", "scores must be finite"));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let df = n - 1.0;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult {
                t: 0.0,
                df,
                p_value: 1.0,
                mean_diff: mean,
                degenerate: true,
            }
        } else {
            TTestResult {
                t: mean.signum() * f64::INFINITY,
                df,
                p_value: 0.0,
                mean_diff: mean,
                degenerate: true,
            }
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| WetError::numeric("paired_t_test", e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(TTestResult {
        t,
        df,
        p_value: p,
        mean_diff: mean,
        degenerate: false,
    })
}
