//! Harness configuration with layered precedence.
//!
//! Every override key resolves as: command-line flag > environment variable
//! > config file > built-in default. The file is TOML; environment variables
//! are the key upper-cased under the `CASLOOP_` prefix (for example
//! `CASLOOP_MAX_TURNS`); flags are supplied by the CLI as a key/value map.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{ExtractionMode, RunConfig};
use crate::gateway::GenerationParams;
use crate::repl::BackendDescriptor;

pub const ENV_PREFIX: &str = "CASLOOP_";

/// Every key the layered resolver understands, with its TOML location.
pub const CONFIG_KEYS: [(&str, &str); 15] = [
    ("packs_dir", "packs_dir"),
    ("results_dir", "results_dir"),
    ("backend_command", "backend.launch_command"),
    ("prompt_marker", "backend.prompt_marker"),
    ("statement_timeout_secs", "backend.statement_timeout"),
    ("output_byte_limit", "backend.output_byte_limit"),
    ("adapter", "provider.adapter"),
    ("endpoint", "provider.endpoint"),
    ("key_env", "provider.key_env"),
    ("max_turns", "defaults.max_turns"),
    ("attempt_limit", "defaults.attempt_limit"),
    ("extraction_mode", "defaults.extraction_mode"),
    ("model_id", "defaults.model_id"),
    ("max_tokens", "defaults.max_tokens"),
    ("temperature", "defaults.temperature"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub adapter: String,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub key_env: String,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            adapter: "anthropic".to_string(),
            endpoint: "https://api.anthropic.com/v1/messages".to_string(),
            key_env: "ANTHROPIC_API_KEY".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub backend: BackendDescriptor,
    pub provider: ProviderConfig,
    pub packs_dir: PathBuf,
    pub results_dir: PathBuf,
    pub defaults: RunConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            backend: BackendDescriptor::maple(),
            provider: ProviderConfig::default(),
            packs_dir: PathBuf::from("packs"),
            results_dir: PathBuf::from("results"),
            defaults: RunConfig::new(GenerationParams::new(String::new())),
        }
    }
}

/// The three override layers, all as key → string value.
#[derive(Debug, Clone, Default)]
pub struct ConfigLayers {
    pub flags: BTreeMap<String, String>,
    pub env: BTreeMap<String, String>,
    pub file: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file unreadable: {0}")]
    FileUnreadable(String),
    #[error("config file invalid: {0}")]
    FileInvalid(String),
    #[error("invalid value for {key}: {message}")]
    InvalidValue { key: String, message: String },
}

/// Flag > env > file for one key.
pub fn effective<'a>(layers: &'a ConfigLayers, key: &str) -> Option<&'a str> {
    layers
        .flags
        .get(key)
        .or_else(|| layers.env.get(key))
        .or_else(|| layers.file.get(key))
        .map(String::as_str)
}

/// Collect `CASLOOP_*` variables into the env layer.
pub fn env_layer(vars: impl Iterator<Item = (String, String)>) -> BTreeMap<String, String> {
    vars.filter_map(|(name, value)| {
        name.strip_prefix(ENV_PREFIX)
            .map(|key| (key.to_ascii_lowercase(), value))
    })
    .collect()
}

/// Flatten a TOML config file into the file layer using the key table.
pub fn file_layer(toml_text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let value: toml::Value =
        toml::from_str(toml_text).map_err(|e| ConfigError::FileInvalid(e.to_string()))?;
    let mut layer = BTreeMap::new();
    for (key, path) in CONFIG_KEYS {
        let mut node = Some(&value);
        for part in path.split('.') {
            node = node.and_then(|v| v.get(part));
        }
        let Some(node) = node else { continue };
        let text = match node {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            toml::Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(" "),
            other => other.to_string(),
        };
        layer.insert(key.to_string(), text);
    }
    Ok(layer)
}

fn parse<T: std::str::FromStr>(key: &str, text: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    text.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.to_string(),
        message: e.to_string(),
    })
}

/// Build the effective config from the layers over the built-in defaults.
pub fn build_config(layers: &ConfigLayers) -> Result<HarnessConfig, ConfigError> {
    let mut config = HarnessConfig::default();

    if let Some(v) = effective(layers, "packs_dir") {
        config.packs_dir = PathBuf::from(v);
    }
    if let Some(v) = effective(layers, "results_dir") {
        config.results_dir = PathBuf::from(v);
    }
    if let Some(v) = effective(layers, "backend_command") {
        config.backend.launch_command = v.split_whitespace().map(str::to_string).collect();
    }
    if let Some(v) = effective(layers, "prompt_marker") {
        config.backend.prompt_marker = v.to_string();
    }
    if let Some(v) = effective(layers, "statement_timeout_secs") {
        config.backend.statement_timeout = Duration::from_secs_f64(parse(
            "statement_timeout_secs",
            v,
        )?);
    }
    if let Some(v) = effective(layers, "output_byte_limit") {
        config.backend.output_byte_limit = Some(parse("output_byte_limit", v)?);
    }
    if let Some(v) = effective(layers, "adapter") {
        config.provider.adapter = v.to_string();
    }
    if let Some(v) = effective(layers, "endpoint") {
        config.provider.endpoint = v.to_string();
    }
    if let Some(v) = effective(layers, "key_env") {
        config.provider.key_env = v.to_string();
    }
    if let Some(v) = effective(layers, "max_turns") {
        config.defaults.max_turns = parse("max_turns", v)?;
    }
    if let Some(v) = effective(layers, "attempt_limit") {
        config.defaults.attempt_limit = parse("attempt_limit", v)?;
    }
    if let Some(v) = effective(layers, "extraction_mode") {
        config.defaults.extraction_mode = match v {
            "verbatim" => ExtractionMode::Verbatim,
            "fenced" => ExtractionMode::Fenced,
            other => {
                return Err(ConfigError::InvalidValue {
                    key: "extraction_mode".to_string(),
                    message: format!("expected verbatim or fenced, found {other:?}"),
                })
            }
        };
    }
    if let Some(v) = effective(layers, "model_id") {
        config.defaults.params.model_id = v.to_string();
    }
    if let Some(v) = effective(layers, "max_tokens") {
        config.defaults.params.max_tokens = parse("max_tokens", v)?;
    }
    if let Some(v) = effective(layers, "temperature") {
        config.defaults.params.temperature = Some(parse("temperature", v)?);
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_published_setup() {
        let config = HarnessConfig::default();
        assert_eq!(config.defaults.max_turns, 100);
        assert_eq!(config.defaults.params.max_tokens, 1024);
        assert_eq!(config.defaults.params.thinking_budget, None);
        assert_eq!(config.backend.prompt_marker, "> ");
        assert_eq!(config.backend.init_statements, ["interface(prettyprint = 0):"]);
        assert_eq!(config.backend.statement_timeout, Duration::from_secs(300));
    }

    #[test]
    fn flag_beats_env_beats_file() {
        let mut layers = ConfigLayers::default();
        layers.file.insert("max_turns".into(), "10".into());
        assert_eq!(build_config(&layers).unwrap().defaults.max_turns, 10);
        layers.env.insert("max_turns".into(), "20".into());
        assert_eq!(build_config(&layers).unwrap().defaults.max_turns, 20);
        layers.flags.insert("max_turns".into(), "30".into());
        assert_eq!(build_config(&layers).unwrap().defaults.max_turns, 30);
    }

    #[test]
    fn env_layer_strips_prefix_and_lowercases() {
        let vars = [
            ("CASLOOP_MAX_TURNS".to_string(), "7".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ];
        let layer = env_layer(vars.into_iter());
        assert_eq!(layer.get("max_turns").map(String::as_str), Some("7"));
        assert_eq!(layer.len(), 1);
    }

    #[test]
    fn file_layer_flattens_nested_tables_and_arrays() {
        let layer = file_layer(
            r#"
packs_dir = "p"
[backend]
launch_command = ["maple", "-q"]
statement_timeout = 12.5
[defaults]
max_turns = 42
"#,
        )
        .unwrap();
        assert_eq!(layer["packs_dir"], "p");
        assert_eq!(layer["backend_command"], "maple -q");
        assert_eq!(layer["statement_timeout_secs"], "12.5");
        assert_eq!(layer["max_turns"], "42");
    }

    #[test]
    fn invalid_values_are_reported_with_their_key() {
        let mut layers = ConfigLayers::default();
        layers.flags.insert("max_turns".into(), "not-a-number".into());
        match build_config(&layers) {
            Err(ConfigError::InvalidValue { key, .. }) => assert_eq!(key, "max_turns"),
            other => panic!("expected invalid value, got {other:?}"),
        }
    }
}
