use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::pretrain::{check_applicable, pretrain, PretrainReport};
use super::step::{adam_step, sgd_step, AdamState};
use super::{OptimizerKind, TrainConfig, TrainRecord};
use crate::energy::{boundary_mismatch, mc_loss_with_gradient, quadrature_energy, EnergyModel, LossBreakdown, Resolution};
use crate::error::{Error, Result};
use crate::network::{Checkpoint, Mlp, SamplerState};
use crate::sampling::{stream_rng, Sampler, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerState {
    Adam(AdamState),
    Sgd,
}

impl OptimizerState {
    fn fresh(kind: &OptimizerKind, param_count: usize) -> Self {
        match kind {
            OptimizerKind::Adam { .. } => OptimizerState::Adam(AdamState::new(param_count)),
            OptimizerKind::Sgd => OptimizerState::Sgd,
        }
    }
}

/// A training run that can be stepped, checkpointed and resumed.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: EnergyModel,
    config: TrainConfig,
    net: Mlp,
    optimizer: OptimizerState,
    sampler: Sampler,
    fixed: Option<(Array2<f64>, Array2<f64>)>,
    iteration: u64,
}

impl Trainer {
    pub fn new(model: EnergyModel, net: Mlp, config: TrainConfig) -> Result<Self> {
        model.validate()?;
        config.validate()?;
        config.plan.validate(&model.domain())?;
        if net.input_dim() != model.dim() {
            return Err(Error::Dimension {
                expected: model.dim(),
                got: net.input_dim(),
            });
        }
        let optimizer = OptimizerState::fresh(&config.optimizer, net.param_count());
        let sampler = Sampler::new(config.seed);
        let mut t = Trainer {
            model,
            config,
            net,
            optimizer,
            sampler,
            fixed: None,
            iteration: 0,
        };
        t.fix_batches();
        Ok(t)
    }

    /// Continues a run from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(ckpt: &Checkpoint) -> Result<Self> {
        let missing = |what: &str| Error::validation(what.to_string(), "needed to resume training but absent");
        let config = ckpt.config_echo.clone().ok_or_else(|| missing("config_echo"))?;
        let model = ckpt.model.ok_or_else(|| missing("model"))?;
        let optimizer = ckpt.optimizer.clone().ok_or_else(|| missing("optimizer"))?;
        let sampler = ckpt.sampler.ok_or_else(|| missing("sampler"))?;
        let mut t = Trainer::new(model, ckpt.mlp()?, config)?;
        if std::mem::discriminant(&optimizer) != std::mem::discriminant(&t.optimizer) {
            return Err(Error::validation("optimizer", "state does not match the configured optimizer"));
        }
        t.optimizer = optimizer;
        t.sampler = Sampler::restore(ckpt.rng_seed, [sampler.interior, sampler.boundary]);
        t.iteration = ckpt.iteration;
        Ok(t)
    }

    fn fix_batches(&mut self) {
        if self.config.plan.resample_every_iteration {
            return;
        }
        let mut s = Sampler::new(self.config.seed);
        let domain = self.model.domain();
        let interior = s.interior(&self.config.plan, &domain);
        let boundary = s.boundary(&self.config.plan, &domain, self.model.boundary_kind());
        self.fixed = Some((interior, boundary));
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn into_net(self) -> Mlp {
        self.net
    }

    pub fn model(&self) -> &EnergyModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed optimizer steps.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Samples a batch, evaluates the loss and its gradient, and applies one
    /// optimizer step. Returns the loss at the parameters before the step. On
    /// a non-finite loss, gradient or update the run state is left unchanged.
    pub fn step(&mut self) -> Result<LossBreakdown> {
        let at = self.iteration + 1;
        let tag = |e: Error| match e {
            Error::NonFinite { what, .. } => Error::NonFinite {
                what,
                iteration: Some(at),
            },
            other => other,
        };
        let domain = self.model.domain();
        let drawn;
        let (interior, boundary) = match &self.fixed {
            Some((i, b)) => (i.view(), b.view()),
            None => {
                let i = self.sampler.interior(&self.config.plan, &domain);
                let b = self.sampler.boundary(&self.config.plan, &domain, self.model.boundary_kind());
                drawn = (i, b);
                (drawn.0.view(), drawn.1.view())
            }
        };
        let (loss, grad) = mc_loss_with_gradient(&self.model, &self.net, interior, boundary, self.config.tau).map_err(tag)?;
        let previous = (self.net.clone(), self.optimizer.clone());
        let lr = self.config.lr;
        match (&mut self.optimizer, self.config.optimizer.adam_params()) {
            (OptimizerState::Adam(state), Some(hp)) => adam_step(&mut self.net, &grad, state, lr, &hp),
            _ => sgd_step(&mut self.net, &grad, lr),
        }
        .map_err(tag)?;
        if !self.net.is_finite() {
            (self.net, self.optimizer) = previous;
            return Err(Error::NonFinite {
                what: "parameter update",
                iteration: Some(at),
            });
        }
        self.iteration = at;
        Ok(loss)
    }

    fn quad_resolution(&self) -> Resolution {
        self.config
            .eval
            .quad
            .unwrap_or_else(|| Resolution::default_for(&self.model.domain()))
    }

    /// Quadrature energy and boundary mismatch on the fixed evaluation grid.
    pub fn evaluate(&self) -> Result<(f64, f64)> {
        let quad = quadrature_energy(&self.model, &self.net, self.quad_resolution())?;
        let mismatch = boundary_mismatch(&self.model, &self.net, self.config.eval.boundary_per_unit)?;
        Ok((quad, mismatch))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::from_net(&self.net, self.config.seed, self.iteration);
        c.config_echo = Some(self.config.clone());
        c.model = Some(self.model);
        c.optimizer = Some(self.optimizer.clone());
        let [interior, boundary] = self.sampler.positions();
        c.sampler = Some(SamplerState { interior, boundary });
        c
    }

    /// Steps until the configured iteration budget is reached.
    pub fn run(mut self, on_record: &mut dyn FnMut(&TrainRecord)) -> Result<TrainOutcome> {
        let start = Instant::now();
        let total = self.config.iterations;
        let tau = self.config.tau;
        let mut records = Vec::new();
        let mut best: Option<(f64, Checkpoint)> = None;
        let mut aborted = None;
        let consider = |t: &Trainer, best: &mut Option<(f64, Checkpoint)>| -> Result<f64> {
            let (quad, mismatch) = t.evaluate()?;
            let score = quad + tau * mismatch;
            if best.as_ref().is_none_or(|(s, _)| score < *s) {
                *best = Some((score, t.checkpoint()));
            }
            Ok(quad)
        };
        while self.iteration < total {
            let loss = match self.step() {
                Ok(loss) => loss,
                Err(e @ Error::NonFinite { .. }) => {
                    log::warn!("stopping: {e}");
                    aborted = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            };
            let i = self.iteration;
            let quad_due = self.config.quad_every > 0 && i.is_multiple_of(self.config.quad_every) || i == total;
            let log_due = i.is_multiple_of(self.config.log_every) || i == total;
            if !(quad_due || log_due) {
                continue;
            }
            let quad_energy = if quad_due { Some(consider(&self, &mut best)?) } else { None };
            let record = TrainRecord {
                iteration: i,
                loss_total: loss.total,
                loss_e: loss.loss_e,
                loss_b: loss.loss_b,
                quad_energy,
                wall_time: start.elapsed().as_secs_f64(),
            };
            log::debug!(
                "iter {i}: total {:.4e} energy {:.4e} boundary {:.4e}",
                record.loss_total,
                record.loss_e,
                record.loss_b
            );
            on_record(&record);
            records.push(record);
        }
        let (final_quad, final_mismatch) = self.evaluate()?;
        if best.is_none() {
            consider(&self, &mut best)?;
        }
        let (best_score, best_checkpoint) = best.expect("evaluated at least once");
        Ok(TrainOutcome {
            final_checkpoint: self.checkpoint(),
            net: self.net,
            records,
            best_checkpoint,
            best_score,
            final_quad_energy: final_quad,
            final_boundary_mismatch: final_mismatch,
            pretrain: None,
            aborted,
        })
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Network after the last successful step.
    pub net: Mlp,
    pub records: Vec<TrainRecord>,
    pub final_checkpoint: Checkpoint,
    /// Lowest `quad_energy + τ·boundary_mismatch` among evaluated states.
    pub best_checkpoint: Checkpoint,
    pub best_score: f64,
    pub final_quad_energy: f64,
    pub final_boundary_mismatch: f64,
    pub pretrain: Option<PretrainReport>,
    /// Set when training stopped early on a non-finite value.
    pub aborted: Option<Error>,
}

/// Pretrains if configured, then runs the full iteration budget.
pub fn train(model: &EnergyModel, net: Mlp, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, net, config, &mut |_| {})
}

/// [`train`] with a callback receiving each log record as it is produced.
pub fn train_with(
    model: &EnergyModel,
    mut net: Mlp,
    config: &TrainConfig,
    on_record: &mut dyn FnMut(&TrainRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut report = None;
    if let Some(p) = &config.pretrain {
        check_applicable(model, &p.target)?;
        let mut rng = stream_rng(config.seed, Stream::Pretrain);
        report = pretrain(&mut net, &p.target, p.iterations, p.lr, p.batch, &mut rng)?;
    }
    let mut outcome = Trainer::new(*model, net, config.clone())?.run(on_record)?;
    outcome.pretrain = report;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ActivationKind;
    use crate::energy::RegDirection;
    use crate::optimize::test_config;
    use crate::sampling::BoundaryKind;

    fn bits(net: &Mlp) -> Vec<u64> {
        net.flat_params().iter().map(|v| v.to_bits()).collect()
    }

    fn one_d() -> EnergyModel {
        EnergyModel::OneD { gamma: 0.5 }
    }

    #[test]
    fn zero_iterations_is_a_no_op() {
        let net = Mlp::init(1, &[8, 8], ActivationKind::Relu, 1).unwrap();
        let out = train(&one_d(), net.clone(), &test_config(0, 32, 2)).unwrap();
        assert_eq!(out.net, net);
        assert!(out.records.is_empty());
        assert_eq!(out.final_checkpoint.iteration, 0);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let model = EnergyModel::TwoD {
            gamma: 0.5,
            length: 1.0,
            bc: BoundaryKind::Dirichlet,
        };
        let net = Mlp::init(2, &[8, 8], ActivationKind::sm_relu(0.1), 2).unwrap();
        let cfg = test_config(30, 32, 16);
        let a = train(&model, net.clone(), &cfg).unwrap();
        let b = train(&model, net.clone(), &cfg).unwrap();
        assert_eq!(bits(&a.net), bits(&b.net));
        let mut other = cfg.clone();
        other.seed = 2;
        let c = train(&model, net, &other).unwrap();
        assert_ne!(bits(&a.net), bits(&c.net));
    }

    #[test]
    fn logged_total_is_exact_sum() {
        let net = Mlp::init(1, &[8, 8], ActivationKind::Tanh, 3).unwrap();
        let mut cfg = test_config(50, 32, 2);
        cfg.log_every = 7;
        cfg.quad_every = 20;
        let out = train(&one_d(), net, &cfg).unwrap();
        let iters: Vec<u64> = out.records.iter().map(|r| r.iteration).collect();
        assert_eq!(iters, vec![7, 14, 20, 21, 28, 35, 40, 42, 49, 50]);
        for r in &out.records {
            assert_eq!(r.loss_total, r.loss_e + cfg.tau * r.loss_b);
            assert_eq!(r.quad_energy.is_some(), r.iteration % 20 == 0 || r.iteration == 50);
        }
    }

    #[test]
    fn resume_continues_bit_identically() {
        for plan_resample in [true, false] {
            let model = EnergyModel::Rotated {
                gamma: 0.5,
                phi: 0.3,
                eps: 0.05,
                length: 1.0,
                reg_direction: RegDirection::Normal,
            };
            let net = Mlp::init(2, &[6, 6], ActivationKind::sm_relu(0.1), 4).unwrap();
            let mut cfg = test_config(40, 24, 12);
            cfg.plan.resample_every_iteration = plan_resample;
            let full = train(&model, net.clone(), &cfg).unwrap();

            let mut half_cfg = cfg.clone();
            half_cfg.iterations = 15;
            let half = train(&model, net, &half_cfg).unwrap();
            let text = half.final_checkpoint.to_json();
            let mut ckpt = Checkpoint::from_json(&text, std::path::Path::new("mem")).unwrap();
            ckpt.config_echo.as_mut().unwrap().iterations = 40;
            let resumed = Trainer::resume(&ckpt).unwrap().run(&mut |_| {}).unwrap();
            assert_eq!(bits(&resumed.net), bits(&full.net));
        }
    }

    #[test]
    fn sgd_runs() {
        let net = Mlp::init(1, &[8], ActivationKind::Tanh, 5).unwrap();
        let mut cfg = test_config(20, 32, 2);
        cfg.optimizer = OptimizerKind::Sgd;
        cfg.lr = 1e-4;
        let out = train(&one_d(), net.clone(), &cfg).unwrap();
        assert_ne!(out.net, net);
        assert!(matches!(out.final_checkpoint.optimizer, Some(OptimizerState::Sgd)));
    }

    #[test]
    fn without_penalty_the_field_flattens() {
        let net = Mlp::init(1, &[16, 16], ActivationKind::Tanh, 6).unwrap();
        let mut cfg = test_config(1500, 64, 2);
        cfg.tau = 0.0;
        cfg.lr = 1e-3;
        let out = train(&one_d(), net, &cfg).unwrap();
        assert!(out.final_quad_energy < 1e-6, "{}", out.final_quad_energy);
    }

    #[test]
    fn divergent_run_stops_with_last_good_state() {
        let net = Mlp::init(1, &[8, 8], ActivationKind::Tanh, 7).unwrap();
        let mut cfg = test_config(200, 32, 2);
        cfg.optimizer = OptimizerKind::Sgd;
        cfg.lr = 1e6;
        let out = train(&one_d(), net, &cfg).unwrap();
        let err = out.aborted.expect("run should abort");
        assert!(matches!(err, Error::NonFinite { iteration: Some(_), .. }), "{err}");
        assert!(out.net.is_finite());
        assert!(out.final_checkpoint.iteration < 200);
        assert!(out.final_checkpoint.mlp().unwrap().is_finite());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = Mlp::init(2, &[4], ActivationKind::Tanh, 1).unwrap();
        assert!(train(&one_d(), net, &test_config(1, 8, 2)).is_err());
    }
}
