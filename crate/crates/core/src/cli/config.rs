//! Experiment configuration file.
//!
//! Model parameters have no defaults. Run parameters default to
//! `n_paths = 100000`, `n_inner = 1000`, `grid_steps = 64`,
//! `basis_degree = 2`, `sampling = "direct"`; `seed` is required.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::hedging::{OptionSpec, Sampling};
use crate::model::{BnsParams, MeasureKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: BnsParams<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option: Option<OptionSpec<f64>>,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMethod {
    Terminal,
    Nested,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_n_inner")]
    pub n_inner: usize,
    /// Training paths for the regression hedger; defaults to `n_paths`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    #[serde(default = "default_grid_steps")]
    pub grid_steps: usize,
    /// Backtest grid sizes; defaults to `[grid_steps]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_sweep: Option<Vec<usize>>,
    /// `terminal` for `hedge`, `regression` for `backtest` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<RunMethod>,
    #[serde(default = "default_measure")]
    pub measure: MeasureKind,
    #[serde(default = "default_basis_degree")]
    pub basis_degree: usize,
    #[serde(default)]
    pub sampling: Sampling,
    /// Physical paths along which `hedge` also reports `xi` at every grid time.
    #[serde(default)]
    pub report_paths: usize,
}

fn default_n_paths() -> usize {
    100_000
}

fn default_n_inner() -> usize {
    1_000
}

fn default_grid_steps() -> usize {
    64
}

fn default_measure() -> MeasureKind {
    MeasureKind::Physical
}

fn default_basis_degree() -> usize {
    2
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Engine(#[from] crate::error::EngineError),
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.model.validate()?;
        if let Some(o) = &cfg.option {
            o.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn n_train(&self) -> usize {
        self.run.n_train.unwrap_or(self.run.n_paths)
    }

    pub fn grid_sweep(&self) -> Vec<usize> {
        self.run.grid_sweep.clone().unwrap_or_else(|| vec![self.run.grid_steps])
    }
}
