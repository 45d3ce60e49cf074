//! Experiment harness and file formats for the `slip` command-line tool.

pub mod error;
pub mod experiments;
pub mod output;

use serde::{Deserialize, Serialize};
use slip_core::{InstanceConfig, SlipConfig};

pub use error::{CliError, Result};

/// Contents of the TOML file passed to `slip run`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub instance: InstanceConfig,
    pub solver: SlipConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.solver.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.solver.validate()?;
        Ok(cfg)
    }

    /// Reads JSON when the file name ends in `.json`, TOML otherwise.
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }
}
