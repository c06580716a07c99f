//! Parameter optimization: Adam and plain SGD steps, optional supervised
//! pretraining towards an initial profile, and the training loop with its
//! telemetry and checkpoints.

mod pretrain;
mod step;
mod train;

pub use pretrain::{pretrain, PretrainReport};
pub use step::{adam_step, sgd_step, AdamParams, AdamState};
pub use train::{train, train_with, OptimizerState, TrainOutcome, Trainer};

use serde::{Deserialize, Serialize};

use crate::energy::Resolution;
use crate::error::{Error, Result};
use crate::sampling::SamplingPlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Adam {
        #[serde(default = "step::default_beta1")]
        beta1: f64,
        #[serde(default = "step::default_beta2")]
        beta2: f64,
        #[serde(default = "step::default_eps_hat")]
        eps_hat: f64,
    },
    Sgd,
}

impl OptimizerKind {
    pub fn adam(params: AdamParams) -> Self {
        OptimizerKind::Adam {
            beta1: params.beta1,
            beta2: params.beta2,
            eps_hat: params.eps_hat,
        }
    }

    /// Adam hyperparameters, `None` for SGD.
    pub fn adam_params(&self) -> Option<AdamParams> {
        match *self {
            OptimizerKind::Adam { beta1, beta2, eps_hat } => Some(AdamParams { beta1, beta2, eps_hat }),
            OptimizerKind::Sgd => None,
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::adam(AdamParams::default())
    }
}

/// Field imposed before energy minimization starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    /// Keep the random initialization.
    RandomInit,
    /// `γx + amplitude·sin(frequency·x)`.
    SineRamp {
        gamma: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_frequency")]
        frequency: f64,
    },
}

fn default_amplitude() -> f64 {
    0.1
}

fn default_frequency() -> f64 {
    4.0
}

impl InitialProfile {
    pub fn sine_ramp(gamma: f64) -> Self {
        InitialProfile::SineRamp {
            gamma,
            amplitude: default_amplitude(),
            frequency: default_frequency(),
        }
    }

    pub fn target(&self, x: f64) -> Option<f64> {
        match *self {
            InitialProfile::RandomInit => None,
            InitialProfile::SineRamp {
                gamma,
                amplitude,
                frequency,
            } => Some(gamma * x + amplitude * (frequency * x).sin()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub target: InitialProfile,
    pub iterations: u64,
    pub lr: f64,
    #[serde(default = "default_pretrain_batch")]
    pub batch: usize,
}

fn default_pretrain_batch() -> usize {
    256
}

/// Deterministic evaluation used for telemetry and best-checkpoint selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    /// Midpoint quadrature grid; the per-dimension default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad: Option<Resolution>,
    /// Boundary nodes per unit side length for the mismatch term.
    #[serde(default = "default_boundary_per_unit")]
    pub boundary_per_unit: usize,
}

fn default_boundary_per_unit() -> usize {
    256
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            quad: None,
            boundary_per_unit: default_boundary_per_unit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    pub lr: f64,
    pub tau: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    pub plan: SamplingPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain: Option<PretrainConfig>,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    /// Quadrature energy is computed every `quad_every` steps and always at
    /// the end; 0 means at the end only.
    #[serde(default)]
    pub quad_every: u64,
    pub seed: u64,
    #[serde(default)]
    pub eval: EvalSettings,
}

fn default_log_every() -> u64 {
    100
}

impl TrainConfig {
    /// Checks every field except the iteration budget, which may be zero
    /// for a no-op run.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("train.lr must be > 0, got {}", self.lr)));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("train.tau must be >= 0, got {}", self.tau)));
        }
        if let Some(params) = self.optimizer.adam_params() {
            for (name, b) in [("beta1", params.beta1), ("beta2", params.beta2)] {
                if !(0.0..1.0).contains(&b) {
                    return Err(Error::config(format!("train.optimizer.{name} must lie in [0, 1), got {b}")));
                }
            }
            if params.eps_hat.is_nan() || params.eps_hat <= 0.0 {
                return Err(Error::config(format!(
                    "train.optimizer.eps_hat must be > 0, got {}",
                    params.eps_hat
                )));
            }
        }
        if self.log_every == 0 {
            return Err(Error::config("train.log_every must be >= 1"));
        }
        if let Some(p) = &self.pretrain {
            if !(p.lr > 0.0 && p.lr.is_finite()) {
                return Err(Error::config(format!("train.pretrain.lr must be > 0, got {}", p.lr)));
            }
            if p.batch == 0 {
                return Err(Error::config("train.pretrain.batch must be >= 1"));
            }
        }
        if self.eval.boundary_per_unit == 0 {
            return Err(Error::config("train.eval.boundary_per_unit must be >= 1"));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: u64,
    pub loss_total: f64,
    pub loss_e: f64,
    pub loss_b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_energy: Option<f64>,
    pub wall_time: f64,
}

#[cfg(test)]
pub(crate) fn test_config(iterations: u64, interior: usize, boundary: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        lr: 1e-2,
        tau: 500.0,
        optimizer: OptimizerKind::default(),
        plan: SamplingPlan::uniform(interior, boundary),
        pretrain: None,
        log_every: 10,
        quad_every: 0,
        seed: 1,
        eval: EvalSettings {
            quad: Some(Resolution { nx: 64, ny: 32 }),
            boundary_per_unit: 32,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_round_trip() {
        let mut c = test_config(100, 64, 16);
        c.pretrain = Some(PretrainConfig {
            target: InitialProfile::sine_ramp(0.5),
            iterations: 10,
            lr: 1e-3,
            batch: 32,
        });
        let s = serde_json::to_string(&c).unwrap();
        let back: TrainConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn optimizer_defaults() {
        let o: OptimizerKind = serde_json::from_str(r#"{"kind":"adam"}"#).unwrap();
        assert_eq!(o, OptimizerKind::default());
        let s: OptimizerKind = serde_json::from_str(r#"{"kind":"sgd"}"#).unwrap();
        assert_eq!(s, OptimizerKind::Sgd);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let ok = test_config(10, 8, 8);
        assert!(ok.validate().is_ok());
        let mut c = ok.clone();
        c.lr = 0.0;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.tau = -1.0;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.optimizer = OptimizerKind::adam(AdamParams {
            beta1: 1.0,
            ..AdamParams::default()
        });
        assert!(c.validate().is_err());
    }

    #[test]
    fn sine_ramp_target() {
        let p = InitialProfile::sine_ramp(0.5);
        assert_eq!(p.target(0.0), Some(0.0));
        assert!((p.target(1.0).unwrap() - (0.5 + 0.1 * 4f64.sin())).abs() < 1e-16);
        assert_eq!(InitialProfile::RandomInit.target(0.3), None);
    }
}
