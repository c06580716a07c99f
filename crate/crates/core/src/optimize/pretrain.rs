use ndarray::Array2;
use rand::Rng;

use super::step::{adam_step, AdamParams, AdamState};
use super::InitialProfile;
use crate::autodiff::{forward_batch, loss_param_gradient, JetOrder, MismatchTerm};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::network::Mlp;
use crate::sampling::{sample_interior, Domain, SamplingPlan};

const HELD_OUT: usize = 1000;
const CHECK_EVERY: u64 = 100;
const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainReport {
    pub initial_mse: f64,
    pub final_mse: f64,
}

fn held_out_mse(net: &Mlp, profile: &InitialProfile) -> Result<f64> {
    let nodes = Array2::from_shape_fn((HELD_OUT, 1), |(i, _)| (i as f64 + 0.5) / HELD_OUT as f64);
    let values = forward_batch(net, nodes.view(), JetOrder::Value)?;
    let sum: f64 = values
        .values()
        .iter()
        .zip(nodes.column(0))
        .map(|(u, &x)| {
            let r = u - profile.target(x).expect("profile has a target");
            r * r
        })
        .sum();
    Ok(sum / HELD_OUT as f64)
}

/// Fits `net` to the profile by Adam on the mean-square error over fresh
/// uniform batches of `batch` points in `(0, 1)`. MSE is measured on a fixed
/// midpoint grid; growth by 10× over the starting value aborts.
pub fn pretrain<R: Rng>(
    net: &mut Mlp,
    profile: &InitialProfile,
    iterations: u64,
    lr: f64,
    batch: usize,
    rng: &mut R,
) -> Result<Option<PretrainReport>> {
    if matches!(profile, InitialProfile::RandomInit) {
        return Ok(None);
    }
    if net.input_dim() != 1 {
        return Err(Error::config("pretraining to an initial profile is defined for 1D models only"));
    }
    let initial_mse = held_out_mse(net, profile)?;
    let plan = SamplingPlan::uniform(batch, 0);
    let domain = Domain::interval();
    let hp = AdamParams::default();
    let mut state = AdamState::new(net.param_count());
    let diverged = |mse: f64| mse > DIVERGENCE_FACTOR * initial_mse && mse > f64::EPSILON;
    for it in 1..=iterations {
        let points = sample_interior(&plan, &domain, rng);
        let targets: Vec<f64> = points
            .column(0)
            .iter()
            .map(|&x| profile.target(x).expect("profile has a target"))
            .collect();
        let term = MismatchTerm {
            points: points.view(),
            targets: &targets,
            scale: 1.0 / batch as f64,
        };
        let lg = loss_param_gradient::<EnergyModel>(net, None, Some((&term, 1.0)))?;
        adam_step(net, &lg.grad, &mut state, lr, &hp)?;
        if it % CHECK_EVERY == 0 || it == iterations {
            let mse = held_out_mse(net, profile)?;
            if !mse.is_finite() || diverged(mse) {
                return Err(Error::Diverged {
                    start: initial_mse,
                    current: mse,
                });
            }
        }
    }
    let final_mse = held_out_mse(net, profile)?;
    log::info!("pretraining: mse {initial_mse:.3e} -> {final_mse:.3e}");
    Ok(Some(PretrainReport { initial_mse, final_mse }))
}

/// Whether `model` admits pretraining towards `profile`.
pub(super) fn check_applicable(model: &EnergyModel, profile: &InitialProfile) -> Result<()> {
    if matches!(profile, InitialProfile::SineRamp { .. }) && model.dim() != 1 {
        return Err(Error::config("pretraining to an initial profile is defined for 1D models only"));
    }
    Ok(())
}
