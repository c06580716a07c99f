//! Experiment configuration files (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use ritz_core::autodiff::ActivationKind;
use ritz_core::energy::EnergyModel;
use ritz_core::network::Mlp;
use ritz_core::optimize::{InitialProfile, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub layer_widths: Vec<usize>,
    pub activation: ActivationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Field export resolution; 1024 nodes in 1D, 256×128 in 2D when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("runs/default")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_directory(),
            grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: EnergyModel,
    pub net: NetConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn invalid(field: &str, err: impl std::fmt::Display) -> String {
    format!("{field}: {err}")
}

impl ExperimentConfig {
    pub fn grid(&self) -> GridSpec {
        self.outputs.grid.unwrap_or(if self.model.dim() == 1 {
            GridSpec { nx: 1024, ny: 1 }
        } else {
            GridSpec { nx: 256, ny: 128 }
        })
    }

    /// Checks the configuration for internal consistency. The message names
    /// the offending field.
    pub fn check(&self) -> Result<(), String> {
        self.model.validate().map_err(|e| invalid("model", e))?;
        if self.net.layer_widths.is_empty() {
            return Err("net.layer_widths: at least one hidden layer is required".into());
        }
        if let Some(i) = self.net.layer_widths.iter().position(|&w| w == 0) {
            return Err(format!("net.layer_widths[{i}]: width must be >= 1"));
        }
        self.net.activation.validate().map_err(|e| invalid("net.activation", e))?;
        if self.train.iterations == 0 {
            return Err("train.iterations: must be >= 1".into());
        }
        self.train.validate().map_err(|e| invalid("train", e))?;
        self.train
            .plan
            .validate(&self.model.domain())
            .map_err(|e| invalid("train.plan", e))?;
        if self.train.plan.boundary_count() == 0 {
            return Err("train.plan: boundary point count must be >= 1".into());
        }
        if let Some(p) = &self.train.pretrain {
            if !matches!(p.target, InitialProfile::RandomInit) && self.model.dim() != 1 {
                return Err("train.pretrain.target: initial profiles are defined for 1D models only".into());
            }
        }
        let grid = self.grid();
        if grid.nx < 2 || (self.model.dim() == 2 && grid.ny < 2) {
            return Err(format!(
                "outputs.grid: need at least 2 nodes per axis, got {}x{}",
                grid.nx, grid.ny
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str, path: &Path) -> CliResult<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })?;
        config.check().map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> CliResult<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|e| ritz_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(())
    }

    /// Fresh network drawn from the run seed.
    pub fn init_net(&self) -> CliResult<Mlp> {
        Ok(Mlp::init(
            self.model.dim(),
            &self.net.layer_widths,
            self.net.activation,
            self.train.seed,
        )?)
    }
}
