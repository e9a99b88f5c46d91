//! Training configuration files.
//!
//! ```toml
//! lr = 0.001
//! alpha = 0.65
//!
//! [model]
//! rnn_hidden = 256
//! use_syntax = false
//! ```
//!
//! Top-level keys are `TrainConfig` fields; the optional `[model]` table
//! holds `ModelConfig` fields (encoder fields flattened in).

use std::path::Path;

use anyhow::{bail, Context, Result};
use toprst::{ModelConfig, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FileConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
}

pub fn parse_config(text: &str) -> Result<FileConfig> {
    let mut table: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
    let model = match table.remove("model") {
        None => ModelConfig::default(),
        Some(toml::Value::Table(t)) => t.try_into().context("invalid [model] section")?,
        Some(_) => bail!("`model` must be a table"),
    };
    let train: TrainConfig = table.try_into().context("invalid training settings")?;
    Ok(FileConfig { train, model })
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(parse_config("").unwrap(), FileConfig::default());
    }

    #[test]
    fn both_sections_are_read() {
        let c = parse_config("alpha = 0.0\npenalty_enabled = false\n[model]\nrnn_hidden = 8\nsegmenter_hidden = 4\n").unwrap();
        assert_eq!(c.train.alpha, 0.0);
        assert!(!c.train.penalty_enabled);
        assert_eq!(c.model.encoder.rnn_hidden, 8);
        assert_eq!(c.model.segmenter_hidden, 4);
        assert_eq!(c.model.encoder.word_dim, 200);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config("learning_rate = 0.1").is_err());
        assert!(parse_config("model = 3").is_err());
    }
}
