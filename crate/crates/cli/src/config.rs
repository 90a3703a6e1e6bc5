//! Run configuration: one JSON document drives every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bgintensity::catalog::{OutOfWindowPolicy, SpatialWindow, TimePartition};
use bgintensity::model::Hyperparams;
use bgintensity::sampler::SamplerConfig;
use bgintensity::simulate::SyntheticIntensity;
use bgintensity::{Error, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Time partition request: either a regular split or explicit breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PartitionSpec {
    Regular { periods: usize },
    Explicit { breakpoints: Vec<f64> },
}

impl PartitionSpec {
    pub fn build(&self, horizon: f64) -> Result<TimePartition> {
        let partition = match self {
            PartitionSpec::Regular { periods } => TimePartition::regular(horizon, *periods)?,
            PartitionSpec::Explicit { breakpoints } => TimePartition::new(breakpoints.clone())?,
        };
        if partition.horizon() != horizon {
            return Err(Error::Config(format!(
                "partition ends at {} but horizon_days is {horizon}",
                partition.horizon()
            )));
        }
        Ok(partition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSize {
    pub nx: usize,
    pub ny: usize,
}

/// The resolved configuration for one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub experiment: String,
    /// Catalog file to fit; `simulate` writes its output here when relative
    /// paths are resolved against the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub out_of_window: OutOfWindowPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticIntensity>,
    pub window: SpatialWindow,
    pub horizon_days: f64,
    pub partition: PartitionSpec,
    pub hyperparams: Hyperparams,
    pub sampler: SamplerConfig,
    pub grid: GridSize,
    #[serde(default = "default_k_max")]
    pub cluster_k_max: usize,
    #[serde(default = "default_bins")]
    pub gamma_bins: usize,
}

fn default_k_max() -> usize {
    12
}

fn default_bins() -> usize {
    30
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let config = |msg: String| Err(Error::Config(msg));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return config(format!(
                "config schema_version {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.horizon_days.is_finite() && self.horizon_days > 0.0) {
            return config("horizon_days must be positive".into());
        }
        self.hyperparams.validate()?;
        self.sampler.validate()?;
        if let Some(spec) = &self.synthetic {
            spec.validate()?;
        }
        let partition = self.partition.build(self.horizon_days)?;
        if partition.periods() != self.hyperparams.periods {
            return config(format!(
                "hyperparams.periods = {} but the partition has {} periods",
                self.hyperparams.periods,
                partition.periods()
            ));
        }
        if self.grid.nx < 2 || self.grid.ny < 2 {
            return config("grid.nx and grid.ny must be at least 2".into());
        }
        if self.cluster_k_max < 2 {
            return config("cluster_k_max must be at least 2".into());
        }
        if self.gamma_bins == 0 {
            return config("gamma_bins must be at least 1".into());
        }
        Ok(())
    }

    pub fn partition(&self) -> Result<TimePartition> {
        self.partition.build(self.horizon_days)
    }
}

/// Bundled experiment presets, loadable by name in place of a config path.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "synthetic-paper",
        include_str!("../presets/synthetic-paper.json"),
    ),
    ("mexico-paper", include_str!("../presets/mexico-paper.json")),
];

/// Loads a configuration from a preset name or a JSON file path.
pub fn load_config(spec: &str) -> Result<RunConfig> {
    let text = if let Some((_, preset)) = PRESETS.iter().find(|(name, _)| *name == spec) {
        (*preset).to_string()
    } else {
        let path = Path::new(spec);
        if !path.exists() {
            return Err(Error::Config(format!(
                "config '{spec}' is neither a bundled preset ({}) nor an existing file",
                PRESETS
                    .iter()
                    .map(|(n, _)| *n)
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        std::fs::read_to_string(path)?
    };
    let config: RunConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    config.validate()?;
    Ok(config)
}
