//! Application configuration: a TOML file layered over defaults, with
//! `STAGEWISE_<SECTION>_<KEY>` environment overrides on top.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::detector::{CueLexicon, Detector, DetectorConfig};
use crate::engine::{DialogueConfig, Engine};
use crate::gateway::BackendConfig;
use crate::prompt::{FallbackLines, PromptTemplates, ResponseParser};

/// Prefix of environment overrides.
pub const ENV_PREFIX: &str = "STAGEWISE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1:8080".to_string(),
        }
    }
}

/// Where session logs live; no directory keeps them in memory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    pub dir: Option<PathBuf>,
}

/// Replacement data files; unset entries use the bundled copies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssetsConfig {
    pub lexicon: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub fallbacks: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Turn cap for personas that do not set their own.
    pub turn_cap: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            turn_cap: crate::eval::DEFAULT_TURN_CAP,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub backend: BackendConfig,
    /// Backend for the signal classifier; defaults to `backend`.
    pub classifier: Option<BackendConfig>,
    pub detector: DetectorConfig,
    pub dialogue: DialogueConfig,
    pub assets: AssetsConfig,
    pub server: ServerConfig,
    pub store: StoreConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("environment override {var}: unknown section")]
    UnknownSection { var: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

const SECTIONS: [&str; 8] = [
    "backend",
    "classifier",
    "detector",
    "dialogue",
    "assets",
    "server",
    "store",
    "eval",
];

fn merge(base: &mut Table, overlay: Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Reads an override value as a TOML literal when it is one (numbers,
/// booleans, quoted strings), else as a bare string.
fn env_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

impl AppConfig {
    /// Defaults, then the file at `path` (if any), then matching variables
    /// from `env`.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut table = Table::try_from(AppConfig::default()).map_err(|e| ConfigError::Parse {
            origin: "defaults".into(),
            message: e.to_string(),
        })?;
        if let Some(path) = path {
            let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let file: Table = toml::from_str(&src).map_err(|e| ConfigError::Parse {
                origin: path.display().to_string(),
                message: e.to_string(),
            })?;
            merge(&mut table, file);
        }
        for (var, raw) in env {
            let Some(rest) = var.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let rest = rest.to_ascii_lowercase();
            let Some(section) = SECTIONS.iter().find(|s| rest.starts_with(&format!("{s}_"))) else {
                if rest == "api_key" {
                    continue;
                }
                return Err(ConfigError::UnknownSection { var });
            };
            let key = rest[section.len() + 1..].to_string();
            let mut overlay = Table::new();
            overlay.insert(key, env_value(&raw));
            let mut outer = Table::new();
            outer.insert(section.to_string(), Value::Table(overlay));
            merge(&mut table, outer);
        }
        let config: AppConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
            origin: "merged configuration".into(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// [`AppConfig::load`] with the process environment.
    pub fn from_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(path, std::env::vars())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.detector
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.dialogue.crisis_referral.trim().is_empty() {
            return Err(ConfigError::Invalid(
                "dialogue.crisis_referral must not be empty".into(),
            ));
        }
        if self.dialogue.closing_reply.trim().is_empty() {
            return Err(ConfigError::Invalid("dialogue.closing_reply must not be empty".into()));
        }
        if self.eval.turn_cap == 0 {
            return Err(ConfigError::Invalid("eval.turn_cap must be positive".into()));
        }
        Ok(())
    }

    /// Loads the data files and backends and assembles the turn engine.
    pub fn build_engine(&self) -> Result<Engine, BuildError> {
        let lexicon = Arc::new(match &self.assets.lexicon {
            Some(p) => CueLexicon::load(p).map_err(|e| BuildError::Asset(e.to_string()))?,
            None => CueLexicon::bundled(),
        });
        let templates = match &self.assets.templates {
            Some(p) => PromptTemplates::load(p).map_err(|e| BuildError::Asset(e.to_string()))?,
            None => PromptTemplates::bundled(),
        };
        let fallbacks = match &self.assets.fallbacks {
            Some(p) => FallbackLines::load(p).map_err(|e| BuildError::Asset(e.to_string()))?,
            None => FallbackLines::bundled(),
        };
        let backend = self.backend.build().map_err(|e| BuildError::Backend(e.to_string()))?;
        let mut detector = Detector::new(lexicon.clone(), self.detector);
        if self.detector.mode != crate::detector::DetectorMode::Rules {
            let classifier = match &self.classifier {
                Some(c) => c.build().map_err(|e| BuildError::Backend(e.to_string()))?,
                None => backend.clone(),
            };
            detector = detector.with_classifier(classifier);
        }
        let parser = ResponseParser::new(lexicon.suggestion.clone(), fallbacks);
        Ok(Engine::new(
            detector,
            Arc::new(templates),
            Arc::new(parser),
            backend,
            self.dialogue.clone(),
        ))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("loading data file: {0}")]
    Asset(String),
    #[error("building backend: {0}")]
    Backend(String),
}
