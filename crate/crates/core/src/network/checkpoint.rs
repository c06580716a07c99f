//! Self-describing JSON checkpoints.
//!
//! Reals are written as shortest round-trip decimals, so save → load
//! reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Layer, Mlp};
use crate::autodiff::ActivationKind;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::optimize::{OptimizerState, TrainConfig};
use crate::sampling::StreamPosition;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    /// Row-major, one inner list per output unit.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Positions of the interior and boundary sampling streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerState {
    pub interior: StreamPosition,
    pub boundary: StreamPosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub input_dim: usize,
    pub layer_widths: Vec<usize>,
    pub activation: ActivationKind,
    pub layers: Vec<LayerRecord>,
    pub rng_seed: u64,
    pub iteration: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_echo: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<EnergyModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerState>,
}

impl Checkpoint {
    /// A checkpoint holding only the network.
    pub fn from_net(net: &Mlp, rng_seed: u64, iteration: u64) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| LayerRecord {
                weights: l.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
                bias: l.bias.to_vec(),
            })
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            input_dim: net.input_dim(),
            layer_widths: net.layer_widths().to_vec(),
            activation: net.activation(),
            layers,
            rng_seed,
            iteration,
            config_echo: None,
            model: None,
            optimizer: None,
            sampler: None,
        }
    }

    /// Rebuilds the network, checking the declared widths against the stored
    /// matrices.
    pub fn mlp(&self) -> Result<Mlp> {
        if self.layers.len() != self.layer_widths.len() + 1 {
            return Err(Error::validation(
                "layers",
                format!(
                    "{} hidden widths declared but {} layers stored",
                    self.layer_widths.len(),
                    self.layers.len()
                ),
            ));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut fan_in = self.input_dim;
        for (l, rec) in self.layers.iter().enumerate() {
            let fan_out = self.layer_widths.get(l).copied().unwrap_or(1);
            if rec.weights.len() != fan_out {
                return Err(Error::validation(
                    format!("layers[{l}].weights"),
                    format!("declared width {fan_out} but found {} rows", rec.weights.len()),
                ));
            }
            if let Some(r) = rec.weights.iter().position(|row| row.len() != fan_in) {
                return Err(Error::validation(
                    format!("layers[{l}].weights[{r}]"),
                    format!("expected {fan_in} columns, found {}", rec.weights[r].len()),
                ));
            }
            let flat: Vec<f64> = rec.weights.concat();
            let weights = Array2::from_shape_vec((fan_out, fan_in), flat).expect("checked shape");
            layers.push(Layer::new(weights, Array1::from(rec.bias.clone())));
            fan_in = fan_out;
        }
        Mlp::from_layers(self.input_dim, self.activation, layers)
    }

    fn validate(&self) -> Result<()> {
        let net = self.mlp()?;
        if let Some(OptimizerState::Adam(state)) = &self.optimizer {
            if state.m.len() != net.param_count() || state.v.len() != net.param_count() {
                return Err(Error::validation(
                    "optimizer",
                    format!("moment length does not match {} parameters", net.param_count()),
                ));
            }
        }
        if let Some(model) = &self.model {
            if model.dim() != self.input_dim {
                return Err(Error::validation(
                    "model",
                    format!("{}D model for a network with input_dim {}", model.dim(), self.input_dim),
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    /// Parses and validates a checkpoint document; `path` only labels errors.
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |e: serde_json::Error| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        };
        let value: serde_json::Value = serde_json::from_str(text).map_err(parse_err)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == CHECKPOINT_FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Version {
                    path: path.to_path_buf(),
                    found: v.min(u32::MAX as u64) as u32,
                    expected: CHECKPOINT_FORMAT_VERSION,
                })
            }
            None => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    location: "format_version".into(),
                    message: "missing or non-integer format_version".into(),
                })
            }
        }
        // reparse from text so floats keep their exact decimal round trip
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(parse_err)?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text, path)
    }
}
