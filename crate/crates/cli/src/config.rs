//! The run configuration file: one TOML document covering data generation,
//! model shape, training, and decoding.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use layoutgraph::eval::DecodeConfig;
use layoutgraph::io::SynthConfig;
use layoutgraph::model::{ModelConfig, TrainHyper};

use crate::CliError;

/// Everything a run needs. Every field has a default, so an empty file, or
/// no file at all, is a valid configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for model parameter initialization.
    pub init_seed: u64,
    pub model: ModelConfig,
    pub train: TrainHyper,
    pub synth: SynthConfig,
    pub decode: DecodeConfig,
}

impl RunConfig {
    /// Reads a TOML run configuration, or the defaults when no path is given.
    /// Unknown keys are rejected so typos fail loudly instead of silently
    /// falling back to a default.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let raw = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Prints the fully resolved configuration to stderr so every run records
    /// the settings it actually used, including defaults and flag overrides.
    pub fn echo(&self) {
        let rendered = toml::to_string_pretty(self)
            .unwrap_or_else(|e| format!("# failed to render config: {e}"));
        eprintln!("# resolved configuration\n{rendered}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn empty_document_is_all_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("learning_rate = 0.1").is_err());
        assert!(toml::from_str::<RunConfig>("[model]\nwidth = 3").is_err());
    }
}
