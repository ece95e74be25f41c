use std::path::Path;

use capscst::data::Split;
use capscst::textproc::Role;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Every tunable of every command. A `--config` JSON file may set any subset; command-line
/// flags then override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub role: Role,
    pub split: Split,
    // synthetic corpus
    pub n_clips: usize,
    pub frames: usize,
    pub dim: usize,
    pub noise_std: f64,
    // model
    pub d_model: usize,
    pub n_heads: usize,
    pub max_len: usize,
    // training
    pub batch: usize,
    pub mle_epochs: usize,
    pub mle_lr: f64,
    pub scst_epochs: usize,
    pub scst_lr: f64,
    pub temperature: f64,
    // decoding
    pub sample: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            role: Role::Description,
            split: Split::Test,
            n_clips: 500,
            frames: 8,
            dim: 16,
            noise_std: 0.1,
            d_model: 64,
            n_heads: 2,
            max_len: 24,
            batch: 8,
            mle_epochs: 30,
            mle_lr: 1e-3,
            scst_epochs: 10,
            scst_lr: 5e-5,
            temperature: 1.0,
            sample: false,
        }
    }
}

impl RunConfig {
    /// Defaults, overlaid with the config file when one is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Copies each `Some` flag value over the matching config field.
macro_rules! overlay {
    ($cfg:expr, $args:expr, [$($field:ident),* $(,)?]) => {
        $(if let Some(v) = $args.$field.clone() {
            $cfg.$field = v;
        })*
    };
}
pub(crate) use overlay;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 9, "role": "avoidance"}"#).unwrap();
        let cfg = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.role, Role::Avoidance);
        assert_eq!(cfg.mle_epochs, 30);
    }

    #[test]
    fn unknown_keys_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"epochs": 3}"#).unwrap();
        assert_eq!(RunConfig::load(Some(&path)).unwrap_err().code(), 2);
        assert_eq!(RunConfig::load(Some(&dir.path().join("nope.json"))).unwrap_err().code(), 1);
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig { seed: 3, split: Split::Val, ..RunConfig::default() };
        assert_eq!(serde_json::from_str::<RunConfig>(&cfg.to_json()).unwrap(), cfg);
    }
}
