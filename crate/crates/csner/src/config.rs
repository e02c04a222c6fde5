//! `key = value` run configuration.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Relative paths are resolved against the config file's directory.
//! Command-line flags override the file, which overrides the defaults.

use std::path::{Path, PathBuf};

use csner_core::trainer::{DecayTrigger, Precision};
use csner_core::TrainingConfig;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("bad value `{value}` for `{key}`")]
    Value { key: String, value: String },
}

/// Training settings plus the files a run touches.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub training: TrainingConfig,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub vec_eng: Option<PathBuf>,
    pub vec_spa: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value { key: key.into(), value: value.into() })
}

/// Applies one training setting. Returns `Ok(false)` when `key` is not a training key.
pub fn set_training(cfg: &mut TrainingConfig, key: &str, value: &str) -> Result<bool, ConfigError> {
    match key {
        "hidden" => {
            cfg.word_hidden = parse(key, value)?;
            cfg.char_hidden = cfg.word_hidden;
        }
        "word_hidden" => cfg.word_hidden = parse(key, value)?,
        "char_hidden" => cfg.char_hidden = parse(key, value)?,
        "batch_size" => cfg.batch_size = parse(key, value)?,
        "word_dim" => cfg.word_dim = parse(key, value)?,
        "char_dim" => cfg.char_dim = parse(key, value)?,
        "dropout" => cfg.dropout = parse(key, value)?,
        "lr0" => cfg.lr0 = parse(key, value)?,
        "decay" => cfg.decay = parse(key, value)?,
        "decay_trigger" => {
            cfg.decay_trigger = match value {
                "every_epoch" => DecayTrigger::EveryEpoch,
                "on_plateau" => DecayTrigger::OnPlateau,
                _ => return Err(ConfigError::Value { key: key.into(), value: value.into() }),
            }
        }
        "patience" => cfg.patience = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        "max_epochs" => cfg.max_epochs = parse(key, value)?,
        "init_scale" => cfg.init_scale = parse(key, value)?,
        "float64" => cfg.precision = if parse::<bool>(key, value)? { Precision::F64 } else { Precision::F32 },
        "post_process_dev" => cfg.post_process_dev = parse(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Every training setting as `(key, value)`; feeding these back through
/// [`set_training`] reproduces `cfg` exactly.
pub fn training_settings(cfg: &TrainingConfig) -> Vec<(&'static str, String)> {
    vec![
        ("word_hidden", cfg.word_hidden.to_string()),
        ("char_hidden", cfg.char_hidden.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("word_dim", cfg.word_dim.to_string()),
        ("char_dim", cfg.char_dim.to_string()),
        ("dropout", cfg.dropout.to_string()),
        ("lr0", cfg.lr0.to_string()),
        ("decay", cfg.decay.to_string()),
        (
            "decay_trigger",
            match cfg.decay_trigger {
                DecayTrigger::EveryEpoch => "every_epoch",
                DecayTrigger::OnPlateau => "on_plateau",
            }
            .to_string(),
        ),
        ("patience", cfg.patience.to_string()),
        ("seed", cfg.seed.to_string()),
        ("max_epochs", cfg.max_epochs.to_string()),
        ("init_scale", cfg.init_scale.to_string()),
        ("float64", (cfg.precision == Precision::F64).to_string()),
        ("post_process_dev", cfg.post_process_dev.to_string()),
    ]
}

impl RunConfig {
    /// Applies one setting; `base` anchors relative paths.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<bool, ConfigError> {
        let slot = match key {
            "train" => &mut self.train,
            "dev" => &mut self.dev,
            "test" => &mut self.test,
            "vec_eng" => &mut self.vec_eng,
            "vec_spa" => &mut self.vec_spa,
            "checkpoint" => &mut self.checkpoint,
            "out" => &mut self.out,
            _ => return set_training(&mut self.training, key, value),
        };
        *slot = Some(base.join(value));
        Ok(true)
    }

    /// Applies a config file's text on top of `self`.
    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if !self.set(key, value, base)? {
                return Err(ConfigError::UnknownKey { line: i + 1, key: key.into() });
            }
        }
        Ok(())
    }
}
