//! Experiment configuration.
//!
//! One TOML file holds every knob of a run. Missing fields take their
//! defaults, unknown fields are rejected, and `schema_version` must match
//! [`SCHEMA_VERSION`].
//!
//! ```toml
//! schema_version = 1
//! output_dir = "runs/demo"
//!
//! [reservoir]
//! dims = [10, 10, 10]
//! lambda = 2.0
//! w_scale = 0.003
//!
//! [pipeline]
//! temporal_windows = 10
//! semantic_mask = true
//!
//! [dataset]
//! task = "staged"
//! sequence_length = 8
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSpec, Task};
use crate::error::{Error, Result};
use crate::lif::LifParams;
use crate::readout::{ReadoutConfig, TrainConfig};
use crate::reservoir::BuildConfig;
use crate::semantic::STAGES;
use crate::spike::EncoderConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Number of averaging windows per encoding window (`T/W`).
    pub temporal_windows: usize,
    /// Monotone stage decoding at evaluation time (staged task only).
    pub semantic_mask: bool,
    /// Epochs and learning rate of the mean-rate logistic baseline.
    pub baseline_epochs: usize,
    pub baseline_learning_rate: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            temporal_windows: 10,
            semantic_mask: false,
            baseline_epochs: 300,
            baseline_learning_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub output_dir: PathBuf,
    pub reservoir: BuildConfig,
    pub lif: LifParams,
    pub encoder: EncoderConfig,
    pub readout: ReadoutConfig,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    pub dataset: DatasetSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            output_dir: PathBuf::from("runs/default"),
            reservoir: BuildConfig::default(),
            lif: LifParams::default(),
            encoder: EncoderConfig::default(),
            readout: ReadoutConfig::default(),
            train: TrainConfig::default(),
            pipeline: PipelineConfig::default(),
            dataset: DatasetSpec::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates. Syntax and type errors carry line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::format("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Format { detail, .. } => Error::Format {
                what: "config",
                detail: format!("{}: {detail}", path.display()),
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::format("config", e.to_string()))
    }

    /// Liquid steps per labelled sample, one encoding window.
    pub fn sample_steps(&self) -> usize {
        self.encoder.window
    }

    /// Averaging window `W = τ_enc / (T/W)`.
    pub fn window(&self) -> usize {
        self.encoder.window / self.pipeline.temporal_windows.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.reservoir.validate()?;
        self.lif.validate()?;
        self.encoder.validate()?;
        self.train.validate()?;
        self.dataset.validate()?;
        let tw = self.pipeline.temporal_windows;
        if tw == 0 || self.encoder.window % tw != 0 {
            return Err(Error::invalid(format!(
                "pipeline.temporal_windows = {tw} must divide encoder.window = {}",
                self.encoder.window
            )));
        }
        if self.reservoir.dims.iter().any(|&d| d < self.readout.kernel) {
            return Err(Error::invalid(format!(
                "reservoir.dims {:?} are smaller than the readout kernel {}",
                self.reservoir.dims, self.readout.kernel
            )));
        }
        if self.readout.c_out == 0 || self.readout.kernel == 0 {
            return Err(Error::invalid("readout.c_out and readout.kernel must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.readout.dropout) {
            return Err(Error::invalid("readout.dropout must be in [0, 1)"));
        }
        if self.pipeline.semantic_mask && self.dataset.classes != STAGES {
            return Err(Error::invalid(format!(
                "pipeline.semantic_mask needs exactly {STAGES} classes, dataset has {}",
                self.dataset.classes
            )));
        }
        if self.pipeline.semantic_mask && self.dataset.task != Task::Staged {
            return Err(Error::invalid("pipeline.semantic_mask only applies to the staged task"));
        }
        Ok(())
    }
}
