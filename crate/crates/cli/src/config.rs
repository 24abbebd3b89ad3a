use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use renewal_core::harness::{Positive, Scenario};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::CliError;

/// A run configuration: either this object or a bare scenario.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Replaces every scenario tolerance.
    #[serde(default)]
    pub tolerance: Option<Positive>,
    /// Per-scenario tolerance, by id.
    #[serde(default)]
    pub tolerances: BTreeMap<String, Positive>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Failure(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        let is_config = value.as_object().is_some_and(|o| o.contains_key("scenarios"));
        let cfg = if is_config {
            parse_value::<Config>(value)?
        } else {
            Config {
                scenarios: vec![parse_value::<Scenario>(value)?],
                out: None,
                seed: None,
                tolerance: None,
                tolerances: BTreeMap::new(),
            }
        };
        let mut seen = std::collections::BTreeSet::new();
        for s in &cfg.scenarios {
            if !seen.insert(s.id.as_str()) {
                return Err(CliError::Schema(format!("duplicate scenario id '{}'", s.id)));
            }
            if s.id.is_empty() || s.id.contains(['/', '\\']) || s.id.starts_with('.') {
                return Err(CliError::Schema(format!("scenario id '{}' is not a valid file stem", s.id)));
            }
        }
        for id in cfg.tolerances.keys() {
            if !seen.contains(id.as_str()) {
                return Err(CliError::Schema(format!("tolerances.{id}: no scenario with this id")));
            }
        }
        Ok(cfg)
    }
}

/// Deserializes with the path of the offending field in the message.
pub fn parse_value<T: DeserializeOwned>(value: serde_json::Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Schema(format!("{path}: {}", e.into_inner()))
    })
}

/// Inline JSON, or `@path` to read it from a file.
pub fn parse_arg<T: DeserializeOwned>(name: &str, arg: &str) -> Result<T, CliError> {
    let text = match arg.strip_prefix('@') {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Failure(format!("cannot read {p}: {e}")))?,
        None => arg.to_string(),
    };
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("--{name}: {e}")))?;
    parse_value(value).map_err(|e| match e {
        CliError::Schema(m) => CliError::Schema(format!("--{name}: {m}")),
        e => e,
    })
}
