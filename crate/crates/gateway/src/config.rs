use serde::Deserialize;
use serde_json::Value;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("invalid config at {path}: {message}")]
    ConfigInvalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::ConfigInvalid { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    /// Replays a recorded transcript.
    Scripted { transcript: PathBuf },
    /// Chat-completion style HTTP endpoint. The key is read from the
    /// environment variable named by `api_key_env`.
    Http {
        endpoint: String,
        model: String,
        #[serde(default = "default_key_env")]
        api_key_env: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default)]
        structured_output: bool,
    },
}

fn default_key_env() -> String {
    "SCENEWEAVE_API_KEY".into()
}

fn default_timeout() -> u64 {
    60
}

fn default_listen() -> String {
    "127.0.0.1:7878".into()
}

fn default_timestep() -> f64 {
    sceneweave_core::animation::DEFAULT_TIMESTEP
}

fn default_cadence() -> u64 {
    5
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default)]
    pub websocket_listen: Option<String>,
    pub provider: ProviderConfig,
    #[serde(default)]
    pub room_scan: Option<PathBuf>,
    #[serde(default)]
    pub prefabs: Option<PathBuf>,
    #[serde(default = "default_timestep")]
    pub timestep: f64,
    /// Ticks between snapshots for new sessions.
    #[serde(default = "default_cadence")]
    pub snapshot_cadence: u64,
    /// Usage ledger written as JSON lines on shutdown.
    #[serde(default)]
    pub usage_log: Option<PathBuf>,
}

const SECRET_KEYS: [&str; 4] = ["api_key", "apikey", "key", "token"];

fn reject_secrets(value: &Value, path: &str) -> Result<(), ConfigError> {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let here = format!("{path}/{k}");
                if SECRET_KEYS.contains(&k.to_ascii_lowercase().as_str()) {
                    return Err(invalid(here, "API keys are read from the environment, never from the config file"));
                }
                reject_secrets(v, &here)?;
            }
            Ok(())
        }
        Value::Array(items) => items.iter().enumerate().try_for_each(|(i, v)| reject_secrets(v, &format!("{path}/{i}"))),
        _ => Ok(()),
    }
}

impl Config {
    /// Parses JSON, or TOML when the text is not JSON. Relative paths are
    /// resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Config, ConfigError> {
        let value: Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(json_err) => toml::from_str(text).map_err(|toml_err| {
                invalid("", format!("neither JSON ({json_err}) nor TOML ({})", toml_err.message()))
            })?,
        };
        reject_secrets(&value, "")?;
        let mut config: Config = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let pointer = if path == "." { String::new() } else { format!("/{}", path.replace('.', "/")) };
            invalid(pointer, e.into_inner().to_string())
        })?;
        config.validate()?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ProviderConfig::Scripted { transcript } = &mut config.provider {
            resolve(transcript);
        }
        config.room_scan.as_mut().map(resolve);
        config.prefabs.as_mut().map(resolve);
        config.usage_log.as_mut().map(resolve);
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Unreadable { path: path.display().to_string(), message: e.to_string() })?;
        Config::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.timestep > 0.0 && self.timestep.is_finite()) {
            return Err(invalid("/timestep", "must be a positive number of seconds"));
        }
        if self.snapshot_cadence == 0 {
            return Err(invalid("/snapshot_cadence", "must be at least 1 tick"));
        }
        if let ProviderConfig::Http { endpoint, api_key_env, .. } = &self.provider {
            if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
                return Err(invalid("/provider/endpoint", "expected an http(s) URL"));
            }
            if api_key_env.is_empty() {
                return Err(invalid("/provider/api_key_env", "must name an environment variable"));
            }
        }
        Ok(())
    }
}
