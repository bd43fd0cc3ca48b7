use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::detect::{ConfigError, DetectorConfig, Refinement};
use crate::types::Address;

const KEYS: &[&str] =
    &["p1_threshold", "p2_threshold_usd", "attacker_contracts", "allowlist", "refinements", "accept_root_caller"];

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{path}: unknown key `{key}` (expected one of: {})", KEYS.join(", "))]
    UnknownKey { path: PathBuf, key: String },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: ConfigError },
}

#[derive(Deserialize, Default)]
struct RawConfig {
    p1_threshold: Option<f64>,
    p2_threshold_usd: Option<f64>,
    #[serde(default)]
    attacker_contracts: Vec<Address>,
    allowlist: Option<PathBuf>,
    refinements: Option<Vec<String>>,
    accept_root_caller: Option<bool>,
}

/// Parses a TOML detector configuration. Relative paths inside the file are
/// resolved against `base`.
pub fn parse_config(text: &str, path: &Path, base: Option<&Path>) -> Result<DetectorConfig, ConfigFileError> {
    let syntax = |message: String| ConfigFileError::Syntax { path: path.to_path_buf(), message };
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| syntax(e.to_string()))?;
    if let Some(key) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(ConfigFileError::UnknownKey { path: path.to_path_buf(), key: key.clone() });
    }
    let raw: RawConfig = table.try_into().map_err(|e: toml::de::Error| syntax(e.to_string()))?;

    let mut cfg = DetectorConfig::default();
    if let Some(v) = raw.p1_threshold {
        cfg.price_fluctuation_threshold = v;
    }
    if let Some(v) = raw.p2_threshold_usd {
        cfg.usd_value_threshold = v;
    }
    cfg.attacker_contracts = raw.attacker_contracts.into_iter().collect();
    cfg.allowlist = raw.allowlist.map(|p| match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    });
    if let Some(names) = raw.refinements {
        let parsed: Result<BTreeSet<Refinement>, _> = names.iter().map(|n| n.parse()).collect();
        cfg.refinements = parsed.map_err(|source| ConfigFileError::Invalid { path: path.to_path_buf(), source })?;
    }
    if let Some(v) = raw.accept_root_caller {
        cfg.accept_root_caller = v;
    }
    cfg.validate().map_err(|source| ConfigFileError::Invalid { path: path.to_path_buf(), source })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<DetectorConfig, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text, path, path.parent())
}
