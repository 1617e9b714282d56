//! Run configuration: one JSON document plus `--set key=value` dotted overrides.

use std::path::{Path, PathBuf};

use avmc_core::training::TrainConfig;
use avmc_core::{Error, ModelConfig, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Feature archive; relative paths resolve against the config file's directory.
    pub data: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("run")
}

impl RunConfig {
    /// Reads `path`, applies the overrides and validates every section.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let parsed = Self::from_value(doc, &path.display().to_string())?;
        // Overrides apply to the defaults-filled document, so every dotted key must
        // already exist there.
        let mut template = serde_json::to_value(&parsed).expect("config serializes");
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not of the form key=value")))?;
            let parts: Vec<&str> = key.split('.').collect();
            if lookup(&template, &parts).is_none() {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
            // Bare words are strings; everything else must be valid JSON.
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set(&mut template, &parts, value);
        }
        let mut config = Self::from_value(template, "overridden config")?;
        if config.data.is_relative() {
            if let Some(dir) = path.parent() {
                config.data = dir.join(&config.data);
            }
        }
        if config.out_dir.is_relative() {
            if let Some(dir) = path.parent() {
                config.out_dir = dir.join(&config.out_dir);
            }
        }
        config.validate()?;
        Ok(config)
    }

    fn from_value(doc: Value, origin: &str) -> Result<Self> {
        serde_json::from_value(doc).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }
}

fn lookup<'a>(value: &'a Value, path: &[&str]) -> Option<&'a Value> {
    path.iter().try_fold(value, |v, key| v.as_object()?.get(*key))
}

/// `path` must exist in `doc`.
fn set(doc: &mut Value, path: &[&str], value: Value) {
    let node = path.iter().fold(doc, |v, key| &mut v[*key]);
    *node = value;
}
