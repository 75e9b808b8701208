//! Run configuration file (TOML).

use std::path::Path;

use bfnn_core::experiment::SweepSpec;
use bfnn_core::{sha256_hex, ChannelConfig, EstimatorConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Sample counts of the three generated splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 100_000,
            val: 10_000,
            test: 10_000,
        }
    }
}

impl SplitCounts {
    pub fn scaled(self, scale: f64) -> Self {
        let s = |n: usize| ((n as f64 * scale).round() as usize).max(1);
        Self {
            train: s(self.train),
            val: s(self.val),
            test: s(self.test),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Master seed for dataset generation; splits use derived sub-seeds.
    pub data: u64,
    /// Master seed for pilot noise when estimating training data.
    pub estimate: u64,
    /// Weight initialization.
    pub init: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: 1,
            estimate: 2,
            init: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub channel: ChannelConfig,
    pub counts: SplitCounts,
    pub estimator: EstimatorConfig,
    pub train: TrainConfig,
    pub sweep: SweepSpec,
    pub seeds: Seeds,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::parse(&std::fs::read_to_string(p)?),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.channel.validate()?;
        self.estimator.validate()?;
        self.train.validate()?;
        self.sweep.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
