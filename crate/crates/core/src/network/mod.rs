//! Fully connected trial fields `F(x; θ)`.
//!
//! A network alternates affine maps and an elementwise activation; the last
//! affine map has no activation and produces a scalar. `layer_widths` lists
//! the hidden layers only, so an "N×W" network has `N` entries equal to `W`.

mod checkpoint;

pub use checkpoint::{Checkpoint, SamplerState, CHECKPOINT_FORMAT_VERSION};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{forward_jet, ActivationKind};
use crate::error::{Error, Result};
use crate::sampling::{stream_rng, Stream};

/// Truncation bound of the initial weight distribution, in standard deviations.
pub const INIT_TRUNCATION: f64 = 2.0;

/// One affine map `x ↦ W x + b`, `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Self {
        Layer { weights, bias }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    layer_widths: Vec<usize>,
    activation: ActivationKind,
    layers: Vec<Layer>,
}

impl Mlp {
    /// Draws a fresh network. Weights follow a normal law with variance
    /// `2 / (fan_in + fan_out)` truncated at ±2σ (rejection), biases are zero.
    pub fn init(
        input_dim: usize,
        layer_widths: &[usize],
        activation: ActivationKind,
        seed: u64,
    ) -> Result<Self> {
        check_shape(input_dim, layer_widths)?;
        activation.validate()?;
        let mut rng = stream_rng(seed, Stream::Init);
        let mut layers = Vec::with_capacity(layer_widths.len() + 1);
        let mut fan_in = input_dim;
        for &fan_out in layer_widths.iter().chain(std::iter::once(&1)) {
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                std * truncated_standard_normal(&mut rng)
            });
            layers.push(Layer::new(weights, Array1::zeros(fan_out)));
            fan_in = fan_out;
        }
        Ok(Mlp {
            input_dim,
            layer_widths: layer_widths.to_vec(),
            activation,
            layers,
        })
    }

    /// Assembles a network from explicit layers, checking that shapes chain
    /// from `input_dim` to a scalar output and that all parameters are finite.
    pub fn from_layers(
        input_dim: usize,
        activation: ActivationKind,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        activation.validate()?;
        if layers.len() < 2 {
            return Err(Error::validation(
                "layers",
                format!("need at least one hidden layer and an output layer, got {} layers", layers.len()),
            ));
        }
        let layer_widths: Vec<usize> = layers[..layers.len() - 1].iter().map(Layer::fan_out).collect();
        check_shape(input_dim, &layer_widths)?;
        let mut fan_in = input_dim;
        for (l, layer) in layers.iter().enumerate() {
            if layer.fan_in() != fan_in {
                return Err(Error::validation(
                    format!("layers[{l}].weights"),
                    format!("expected {fan_in} columns, found {}", layer.fan_in()),
                ));
            }
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::validation(
                    format!("layers[{l}].bias"),
                    format!("expected length {}, found {}", layer.fan_out(), layer.bias.len()),
                ));
            }
            if layer.weights.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("layers[{l}]"), "non-finite parameter"));
            }
            fan_in = layer.fan_out();
        }
        if fan_in != 1 {
            return Err(Error::validation(
                "layers",
                format!("output layer must be scalar, has width {fan_in}"),
            ));
        }
        Ok(Mlp {
            input_dim,
            layer_widths,
            activation,
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn depth(&self) -> usize {
        self.layer_widths.len()
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameter blocks in canonical order: `W_0, b_0, W_1, b_1, ...`.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        let n = self.param_count();
        if params.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: params.len(),
            });
        }
        let mut rest = params;
        for block in self.param_slices_mut() {
            let (head, tail) = rest.split_at(block.len());
            block.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Human-readable name of flat parameter `index`, e.g. `layers[1].weights[3,0]`.
    pub fn param_name(&self, mut index: usize) -> String {
        for (l, layer) in self.layers.iter().enumerate() {
            let nw = layer.weights.len();
            if index < nw {
                let cols = layer.fan_in();
                return format!("layers[{l}].weights[{},{}]", index / cols, index % cols);
            }
            index -= nw;
            if index < layer.bias.len() {
                return format!("layers[{l}].bias[{index}]");
            }
            index -= layer.bias.len();
        }
        format!("<out of range +{index}>")
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// `F(x; θ)` at a single point.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        forward_jet(self, x).map(|jet| jet.value)
    }
}

fn check_shape(input_dim: usize, layer_widths: &[usize]) -> Result<()> {
    if !(1..=2).contains(&input_dim) {
        return Err(Error::config(format!("input dimension must be 1 or 2, got {input_dim}")));
    }
    if layer_widths.is_empty() {
        return Err(Error::config("network needs at least one hidden layer"));
    }
    if let Some(i) = layer_widths.iter().position(|&w| w == 0) {
        return Err(Error::config(format!("hidden layer {i} has zero width")));
    }
    Ok(())
}

fn truncated_standard_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= INIT_TRUNCATION {
            return z;
        }
    }
}
