//! Layered configuration: built-in defaults, then a TOML file, then
//! command-line overrides. Every section rejects unknown keys.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::augment::AugmentationSpec;
use crate::dsp::SpectralConfig;
use crate::encoder::ConformerConfig;
use crate::eval::EvalProtocol;
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexConfig {
    /// Seconds between the starts of consecutive fingerprinted segments.
    pub hop: f64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self { hop: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub spectral: SpectralConfig,
    pub model: ConformerConfig,
    pub training: TrainConfig,
    pub augmentation: AugmentationSpec,
    pub index: IndexConfig,
    pub eval: EvalProtocol,
}

pub const SECTIONS: [&str; 6] = ["spectral", "model", "training", "augmentation", "index", "eval"];

/// Parses a command-line value: a TOML literal if it is one, otherwise a
/// bare string.
pub fn parse_value(text: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.to_string()))
}

/// Splits `section.key=value`.
pub fn parse_assignment(text: &str) -> Result<(String, Value), ConfigError> {
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| ConfigError::Parse(format!("expected section.key=value, got {text:?}")))?;
    Ok((key.trim().to_string(), parse_value(value.trim())))
}

fn set_path(root: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let (section, field) = key
        .split_once('.')
        .ok_or_else(|| ConfigError::Parse(format!("unknown key {key:?} (expected section.key)")))?;
    if !SECTIONS.contains(&section) {
        return Err(ConfigError::Parse(format!("unknown section {section:?} in key {key:?}")));
    }
    let mut table = root.entry(section).or_insert_with(|| Value::Table(Table::new()));
    let parts: Vec<&str> = field.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        table = table
            .as_table_mut()
            .ok_or_else(|| ConfigError::Parse(format!("key {key:?} is not a table")))?
            .entry(*part)
            .or_insert_with(|| Value::Table(Table::new()));
    }
    table
        .as_table_mut()
        .ok_or_else(|| ConfigError::Parse(format!("key {key:?} is not a table")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn has(t: &Table, section: &str, key: &str) -> bool {
    t.get(section).and_then(Value::as_table).is_some_and(|s| s.contains_key(key))
}

fn to_table<T: Serialize>(v: &T) -> Table {
    Table::try_from(v).expect("config types serialize to TOML tables")
}

impl Config {
    /// Resolves a configuration from an optional file's contents and
    /// `section.key` overrides, in increasing precedence after the
    /// defaults. `model.preset` selects a named model as the base for the
    /// model section; an unset `spectral.n_mels` follows the model.
    pub fn resolve(file: Option<&str>, overrides: &[(String, Value)]) -> Result<Self, ConfigError> {
        Self::resolve_layers(file.as_slice(), overrides)
    }

    /// Like [`Config::resolve`] with several files, later ones taking
    /// precedence key by key.
    pub fn resolve_layers(files: &[&str], overrides: &[(String, Value)]) -> Result<Self, ConfigError> {
        let mut layer = Table::new();
        for text in files {
            let parsed: Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
            for key in parsed.keys() {
                if !SECTIONS.contains(&key.as_str()) {
                    return Err(ConfigError::Parse(format!("unknown section {key:?}")));
                }
            }
            merge(&mut layer, parsed);
        }
        let mut flags = Table::new();
        for (k, v) in overrides {
            set_path(&mut flags, k, v.clone())?;
        }
        merge(&mut layer, flags);

        let mut model_base = ConformerConfig::default();
        if let Some(model) = layer.get_mut("model").and_then(Value::as_table_mut) {
            if let Some(p) = model.remove("preset") {
                let name = p.as_str().ok_or_else(|| ConfigError::Parse("model.preset must be a string".into()))?;
                model_base = ConformerConfig::preset(name)
                    .ok_or_else(|| ConfigError::Parse(format!("unknown model.preset {name:?}")))?;
            }
        }
        let explicit_mels = has(&layer, "spectral", "n_mels");
        let explicit_eval_hop = has(&layer, "eval", "hop");
        if explicit_eval_hop {
            return Err(ConfigError::Parse("unknown field `hop` in eval (set index.hop instead)".into()));
        }

        let mut merged = to_table(&Config {
            model: model_base,
            ..Config::default()
        });
        merge(&mut merged, layer);
        if !explicit_mels {
            let mels = merged["model"]["n_mels"].clone();
            set_path(&mut merged, "spectral.n_mels", mels)?;
        }
        let mut cfg: Config = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
        cfg.eval.hop = cfg.index.hop;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::resolve(Some(text), &[])
    }

    pub fn load(path: &Path, overrides: &[(String, Value)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::resolve(Some(&text), overrides)
    }

    pub fn to_toml_string(&self) -> String {
        let mut t = to_table(self);
        if let Some(e) = t.get_mut("eval").and_then(Value::as_table_mut) {
            e.remove("hop");
        }
        toml::to_string(&t).expect("config serializes")
    }

    /// Re-checks every section and the invariants that span sections.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.spectral.validate().map_err(|e| inv(&e))?;
        self.model.validate().map_err(|e| inv(&e))?;
        self.training.validate().map_err(|e| inv(&e))?;
        self.augmentation.validate().map_err(|e| inv(&e))?;
        self.eval.validate().map_err(|e| inv(&e))?;
        if !(self.index.hop > 0.0 && self.index.hop.is_finite()) {
            return Err(ConfigError::Invalid(format!("index.hop must be positive, got {}", self.index.hop)));
        }
        if self.model.n_mels != self.spectral.n_mels {
            return Err(ConfigError::Invalid(format!(
                "model.n_mels = {} but spectral.n_mels = {}",
                self.model.n_mels, self.spectral.n_mels
            )));
        }
        if self.model.positional_embedding && self.model.max_frames < self.spectral.n_frames() {
            return Err(ConfigError::Invalid(format!(
                "model.max_frames = {} is shorter than a segment ({} frames)",
                self.model.max_frames,
                self.spectral.n_frames()
            )));
        }
        Ok(())
    }
}
