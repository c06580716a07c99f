//! Finite-difference check of the training gradient.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ritz_core::autodiff::fold_pattern;
use ritz_core::energy::{mc_loss, mc_loss_with_gradient};
use ritz_core::network::Mlp;
use ritz_core::sampling::{sample_boundary, sample_interior, stream_rng, Stream};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliResult;

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;
/// Denominator floor of the relative error; below it the error is absolute.
pub const REL_FLOOR: f64 = 1.0;
const MAX_REDRAWS: usize = 50;
/// Half-width of the uniform bias jitter applied for fold activations.
pub const BIAS_JITTER: f64 = 1e-2;

#[derive(Debug, Clone, Serialize)]
pub struct Probe {
    pub index: usize,
    pub param_name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub probes: usize,
    pub param_count: usize,
    pub max_rel_error: f64,
    pub worst: Probe,
    /// Batches redrawn because a perturbation crossed an activation fold.
    pub redraws: usize,
    /// Whether biases were jittered before checking.
    pub jittered: bool,
    pub passed: bool,
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

struct Batch {
    interior: Array2<f64>,
    boundary: Array2<f64>,
}

fn draw(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Batch {
    let domain = config.model.domain();
    Batch {
        interior: sample_interior(&config.train.plan, &domain, rng),
        boundary: sample_boundary(&config.train.plan, &domain, config.model.boundary_kind(), rng),
    }
}

/// Fold signs on the interior and boundary points.
type Folds = (Vec<bool>, Vec<bool>);

fn folds(net: &Mlp, batch: &Batch) -> CliResult<Folds> {
    Ok((
        fold_pattern(net, batch.interior.view())?,
        fold_pattern(net, batch.boundary.view())?,
    ))
}

/// Compares the exact gradient of the penalized loss with central
/// differences on `probes` parameters. Indices cycle through random
/// permutations of all parameters and each cycle draws a fresh batch.
/// `corrupt` perturbs the analytic gradient, as a negative control.
///
/// For activations with a fold the biases are first jittered by up to
/// [`BIAS_JITTER`]: with zero biases every pre-activation vanishes at a
/// boundary node on the origin, where the loss is not differentiable and no
/// redraw helps.
pub fn gradcheck(config: &ExperimentConfig, net: &Mlp, probes: usize, seed: u64, corrupt: bool) -> CliResult<GradcheckReport> {
    let model = &config.model;
    let tau = config.train.tau;
    let n = net.param_count();
    let mut rng = stream_rng(seed, Stream::Probe);
    let has_fold = net.activation().has_fold();
    let jittered_net;
    let net = if has_fold {
        let mut j = net.clone();
        for layer in j.layers_mut() {
            layer.bias.mapv_inplace(|b| b + rng.random_range(-BIAS_JITTER..BIAS_JITTER));
        }
        jittered_net = j;
        &jittered_net
    } else {
        net
    };
    let base = net.flat_params();
    let mut probe_net = net.clone();

    let mut order: Vec<usize> = Vec::new();
    let mut batch = draw(config, &mut rng);
    let mut grad = Vec::new();
    let mut redraws = 0;
    let mut results = Vec::with_capacity(probes);
    let refresh = |batch: &Batch| -> CliResult<Vec<f64>> {
        let (_, g) = mc_loss_with_gradient(model, net, batch.interior.view(), batch.boundary.view(), tau)?;
        Ok(g.flatten())
    };

    for p in 0..probes {
        if order.is_empty() {
            order = (0..n).collect();
            order.shuffle(&mut rng);
            if p > 0 {
                batch = draw(config, &mut rng);
            }
            grad = refresh(&batch)?;
        }
        let k = order.pop().expect("non-empty permutation");
        let mut attempts = 0;
        let numeric = loop {
            let mut eval = |delta: f64| -> CliResult<(f64, Option<Folds>)> {
                let mut params = base.clone();
                params[k] += delta;
                probe_net.set_flat_params(&params)?;
                let loss = mc_loss(model, &probe_net, batch.interior.view(), batch.boundary.view(), tau)?;
                let pattern = if has_fold { Some(folds(&probe_net, &batch)?) } else { None };
                Ok((loss.total, pattern))
            };
            let (plus, fp) = eval(FD_STEP)?;
            let (minus, fm) = eval(-FD_STEP)?;
            let crossed = has_fold && (fp != fm || fp != Some(folds(net, &batch)?));
            if !crossed || attempts >= MAX_REDRAWS {
                break (plus - minus) / (2.0 * FD_STEP);
            }
            attempts += 1;
            redraws += 1;
            batch = draw(config, &mut rng);
            grad = refresh(&batch)?;
        };
        let mut analytic = grad[k];
        if corrupt {
            analytic += 1e-3 * analytic.abs().max(1.0);
        }
        results.push(Probe {
            index: k,
            param_name: net.param_name(k),
            analytic,
            numeric,
            rel_error: rel_error(analytic, numeric),
        });
    }

    let worst = results
        .iter()
        .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
        .cloned()
        .unwrap_or(Probe {
            index: 0,
            param_name: String::new(),
            analytic: 0.0,
            numeric: 0.0,
            rel_error: 0.0,
        });
    Ok(GradcheckReport {
        probes,
        param_count: n,
        max_rel_error: worst.rel_error,
        passed: worst.rel_error < TOLERANCE,
        worst,
        redraws,
        jittered: has_fold,
    })
}
