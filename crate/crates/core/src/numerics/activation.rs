use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::WetError;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_ELU_ALPHA: f64 = 1.0;
pub const DEFAULT_PRELU_ALPHA: f64 = 0.25;

/// Elementwise nonlinearities swept by the activation ablation.
///
/// `PReLU` carries the initial value of its learnable slope; the slope itself
/// lives in the parameter store of whichever layer owns the activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ActivationKind {
    Linear,
    PReLU { alpha: f64 },
    LeakyReLU { slope: f64 },
    Tanh,
    Elu { alpha: f64 },
}

impl ActivationKind {
    pub fn leaky_relu() -> Self {
        ActivationKind::LeakyReLU {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn elu() -> Self {
        ActivationKind::Elu {
            alpha: DEFAULT_ELU_ALPHA,
        }
    }

    pub fn prelu() -> Self {
        ActivationKind::PReLU {
            alpha: DEFAULT_PRELU_ALPHA,
        }
    }

    pub fn all() -> [ActivationKind; 5] {
        [
            ActivationKind::Linear,
            Self::prelu(),
            Self::leaky_relu(),
            ActivationKind::Tanh,
            Self::elu(),
        ]
    }

    pub fn is_learnable(&self) -> bool {
        matches!(self, ActivationKind::PReLU { .. })
    }

    /// Value and derivative at `x`. For PReLU, `slope` is the current learnable alpha.
    pub(crate) fn eval(&self, x: f64, slope: f64) -> (f64, f64) {
        match *self {
            ActivationKind::Linear => (x, 1.0),
            ActivationKind::PReLU { .. } => leaky(x, slope),
            ActivationKind::LeakyReLU { slope } => leaky(x, slope),
            ActivationKind::Tanh => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
            ActivationKind::Elu { alpha } => {
                if x > 0.0 {
                    (x, 1.0)
                } else {
                    let e = x.exp();
                    (alpha * (e - 1.0), alpha * e)
                }
            }
        }
    }

    /// Applies the activation to a plain value (PReLU uses its initial alpha).
    pub fn apply_scalar(&self, x: f64) -> f64 {
        let slope = match *self {
            ActivationKind::PReLU { alpha } => alpha,
            _ => 0.0,
        };
        self.eval(x, slope).0
    }
}

fn leaky(x: f64, slope: f64) -> (f64, f64) {
    if x > 0.0 {
        (x, 1.0)
    } else {
        (slope * x, slope)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ActivationKind::Linear => "linear",
            ActivationKind::PReLU { .. } => "prelu",
            ActivationKind::LeakyReLU { .. } => "leaky_relu",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Elu { .. } => "elu",
        };
        f.write_str(name)
    }
}

impl FromStr for ActivationKind {
    type Err = WetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "linear" => Ok(ActivationKind::Linear),
            "prelu" => Ok(Self::prelu()),
            "leaky_relu" | "leakyrelu" => Ok(Self::leaky_relu()),
            "tanh" => Ok(ActivationKind::Tanh),
            "elu" => Ok(Self::elu()),
            other => Err(WetError::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

impl TryFrom<String> for ActivationKind {
    type Error = WetError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ActivationKind> for String {
    fn from(value: ActivationKind) -> Self {
        value.to_string()
    }
}
