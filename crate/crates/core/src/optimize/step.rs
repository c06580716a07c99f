use serde::{Deserialize, Serialize};

use crate::autodiff::ParamGradient;
use crate::error::{Error, Result};
use crate::network::Mlp;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps_hat")]
    pub eps_hat: f64,
}

pub(super) fn default_beta1() -> f64 {
    0.9
}

pub(super) fn default_beta2() -> f64 {
    0.999
}

pub(super) fn default_eps_hat() -> f64 {
    1e-8
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps_hat: default_eps_hat(),
        }
    }
}

/// First and second moment estimates, flattened in canonical parameter order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }
}

fn check_gradient(net: &Mlp, grad: &ParamGradient) -> Result<()> {
    if !grad.is_congruent(net) {
        return Err(Error::config("gradient shape does not match the network"));
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite {
            what: "gradient",
            iteration: None,
        });
    }
    Ok(())
}

/// One Adam update with bias correction. A non-finite gradient leaves both
/// the parameters and the state untouched.
pub fn adam_step(
    net: &mut Mlp,
    grad: &ParamGradient,
    state: &mut AdamState,
    lr: f64,
    hp: &AdamParams,
) -> Result<()> {
    check_gradient(net, grad)?;
    if state.m.len() != net.param_count() || state.v.len() != net.param_count() {
        return Err(Error::Dimension {
            expected: net.param_count(),
            got: state.m.len(),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    let mut k = 0;
    for (p, g) in net.param_slices_mut().into_iter().zip(grad.slices()) {
        for (pi, &gi) in p.iter_mut().zip(g) {
            let m = hp.beta1 * state.m[k] + (1.0 - hp.beta1) * gi;
            let v = hp.beta2 * state.v[k] + (1.0 - hp.beta2) * gi * gi;
            state.m[k] = m;
            state.v[k] = v;
            *pi -= lr * (m / c1) / ((v / c2).sqrt() + hp.eps_hat);
            k += 1;
        }
    }
    Ok(())
}

/// `θ ← θ − η·g`.
pub fn sgd_step(net: &mut Mlp, grad: &ParamGradient, lr: f64) -> Result<()> {
    check_gradient(net, grad)?;
    for (p, g) in net.param_slices_mut().into_iter().zip(grad.slices()) {
        p.iter_mut().zip(g).for_each(|(pi, gi)| *pi -= lr * gi);
    }
    Ok(())
}
