use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default negative-side slope for [`ActivationKind::LeakyRelu`].
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Default smoothing scale for [`ActivationKind::SmRelu`].
pub const DEFAULT_SMRELU_RHO: f64 = 0.1;

/// Elementwise nonlinearity applied between the affine layers.
///
/// Every kind is total on the reals and provides derivatives up to third
/// order. For the piecewise-linear kinks the derivative at the fold is taken
/// from the left branch (`relu'(0) = 0`) and all higher derivatives are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case", try_from = "RawActivation")]
pub enum ActivationKind {
    Relu,
    LeakyRelu { slope: f64 },
    Sigmoid,
    Tanh,
    /// Smoothened ReLU `(x + sqrt(x^2 + rho^2)) / 2`.
    SmRelu { rho: f64 },
    /// Identity map. Not a trial-space activation; used to build affine
    /// reference networks.
    Linear,
}

/// Flat form used for parsing, so that stray parameters are rejected for
/// every kind (unit variants of a tagged enum would ignore them).
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawActivation {
    tag: String,
    rho: Option<f64>,
    slope: Option<f64>,
}

impl TryFrom<RawActivation> for ActivationKind {
    type Error = String;

    fn try_from(raw: RawActivation) -> std::result::Result<Self, String> {
        let kind = match raw.tag.as_str() {
            "relu" => ActivationKind::Relu,
            "leaky_relu" => ActivationKind::LeakyRelu {
                slope: raw.slope.unwrap_or(DEFAULT_LEAKY_SLOPE),
            },
            "sigmoid" => ActivationKind::Sigmoid,
            "tanh" => ActivationKind::Tanh,
            "sm_relu" => ActivationKind::SmRelu {
                rho: raw.rho.unwrap_or(DEFAULT_SMRELU_RHO),
            },
            "linear" => ActivationKind::Linear,
            other => {
                return Err(format!(
                    "unknown activation `{other}`, expected one of relu, leaky_relu, sigmoid, tanh, sm_relu, linear"
                ))
            }
        };
        let stray = match kind {
            ActivationKind::SmRelu { .. } => raw.slope.map(|_| "slope"),
            ActivationKind::LeakyRelu { .. } => raw.rho.map(|_| "rho"),
            _ => raw.rho.map(|_| "rho").or(raw.slope.map(|_| "slope")),
        };
        if let Some(field) = stray {
            return Err(format!("`{field}` is not a parameter of {}", kind.name()));
        }
        Ok(kind)
    }
}

impl ActivationKind {
    pub fn sm_relu(rho: f64) -> Self {
        ActivationKind::SmRelu { rho }
    }

    pub fn leaky_relu() -> Self {
        ActivationKind::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ActivationKind::SmRelu { rho } if !(rho > 0.0 && rho.is_finite()) => Err(
                Error::config(format!("sm_relu rho must be positive and finite, got {rho}")),
            ),
            ActivationKind::LeakyRelu { slope } if !(slope > 0.0 && slope < 1.0) => Err(
                Error::config(format!("leaky_relu slope must lie in (0,1), got {slope}")),
            ),
            _ => Ok(()),
        }
    }

    /// Whether the activation has a derivative jump at the origin.
    pub fn has_fold(&self) -> bool {
        matches!(self, ActivationKind::Relu | ActivationKind::LeakyRelu { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu { .. } => "leaky_relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::SmRelu { .. } => "sm_relu",
            ActivationKind::Linear => "linear",
        }
    }

    /// Value or derivative of the given order (0..=3) at `x`.
    ///
    /// # Panics
    /// If `order > 3`.
    pub fn eval(&self, x: f64, order: usize) -> f64 {
        assert!(order <= 3, "activation derivative order {order} not supported");
        self.derivatives(x)[order]
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::SmRelu { rho } => {
                let s = (x * x + rho * rho).sqrt();
                if x >= 0.0 {
                    0.5 * (x + s)
                } else {
                    // x + s cancels for x << -rho
                    0.5 * rho * rho / (s - x)
                }
            }
            ActivationKind::Linear => x,
        }
    }

    /// `[σ, σ', σ'', σ''']` at `x`.
    #[inline]
    pub fn derivatives(&self, x: f64) -> [f64; 4] {
        match *self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    [x, 1.0, 0.0, 0.0]
                } else {
                    [0.0, 0.0, 0.0, 0.0]
                }
            }
            ActivationKind::LeakyRelu { slope } => {
                if x > 0.0 {
                    [x, 1.0, 0.0, 0.0]
                } else {
                    [slope * x, slope, 0.0, 0.0]
                }
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                let d1 = s * (1.0 - s);
                [s, d1, d1 * (1.0 - 2.0 * s), d1 * (1.0 - 6.0 * d1)]
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                let d1 = 1.0 - t * t;
                [t, d1, -2.0 * t * d1, -2.0 * d1 * d1 + 4.0 * t * t * d1]
            }
            ActivationKind::SmRelu { rho } => {
                let r2 = rho * rho;
                let s = (x * x + r2).sqrt();
                let (v, d1) = if x >= 0.0 {
                    (0.5 * (x + s), 0.5 * (1.0 + x / s))
                } else {
                    let gap = s - x;
                    (0.5 * r2 / gap, 0.5 * r2 / (s * gap))
                };
                let s3 = s * s * s;
                let d2 = 0.5 * r2 / s3;
                let d3 = -1.5 * r2 * x / (s3 * s * s);
                [v, d1, d2, d3]
            }
            ActivationKind::Linear => [x, 1.0, 0.0, 0.0],
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
