//! Flat `key = value` run configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use cmvf_core::data::SynthConfig;
use cmvf_core::TrainConfig;

use crate::error::CliError;

/// Value of `data` that selects the built-in generator instead of a file.
pub const SYNTH_SOURCE: &str = "synth";
pub const SYNTH_PREFIX: &str = "synth.";
pub const RUN_KEYS: [&str; 4] = ["data", "out", "base", "checkpoint"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub synth: SynthConfig,
    /// CSV path, or `synth` for generated data.
    pub data: Option<String>,
    pub out: Option<PathBuf>,
    /// Literal base AUC or path to a base checkpoint.
    pub base: Option<String>,
    pub checkpoint: Option<PathBuf>,
}

/// Every accepted key, in `config.resolved` order.
pub fn all_keys() -> Vec<String> {
    let mut keys: Vec<String> = RUN_KEYS.iter().map(|k| k.to_string()).collect();
    keys.extend(TrainConfig::KEYS.iter().map(|k| k.to_string()));
    keys.extend(SynthConfig::KEYS.iter().map(|k| format!("{SYNTH_PREFIX}{k}")));
    keys
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        let opt = |v: &str| if v.is_empty() { None } else { Some(v.to_string()) };
        match key {
            "data" => self.data = opt(value),
            "out" => self.out = opt(value).map(PathBuf::from),
            "base" => self.base = opt(value),
            "checkpoint" => self.checkpoint = opt(value).map(PathBuf::from),
            _ => {
                let res = match key.strip_prefix(SYNTH_PREFIX) {
                    Some(k) => self.synth.set(k, value),
                    None => self.train.set(key, value),
                };
                res.map_err(|e| CliError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(CliError::Config(format!("{origin}:{}: key `{k}` given twice", i + 1)));
            }
            self.set(k, v).map_err(|e| CliError::Config(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.data.as_deref() == Some(SYNTH_SOURCE) {
            self.synth.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// All keys with their effective values, one `key = value` per line.
    pub fn resolved(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut lines = vec![
            format!("data = {}", self.data.clone().unwrap_or_default()),
            format!("out = {}", path(&self.out)),
            format!("base = {}", self.base.clone().unwrap_or_default()),
            format!("checkpoint = {}", path(&self.checkpoint)),
        ];
        lines.extend(self.train.entries().into_iter().map(|(k, v)| format!("{k} = {v}")));
        lines.extend(self.synth.entries().into_iter().map(|(k, v)| format!("{SYNTH_PREFIX}{k} = {v}")));
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }
}
