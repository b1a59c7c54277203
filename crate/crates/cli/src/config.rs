//! Backend registry loaded from a TOML file.
//!
//! ```toml
//! [defaults]
//! backbone = "gpt"
//! mapper = "gpt"
//!
//! [backends.gpt]
//! kind = "http"
//! model = "gpt-4o"
//! embed_model = "text-embedding-3-small"
//!
//! [backends.offline]
//! kind = "replay"
//! cassette = "cassettes/gpt.jsonl"
//! model = "gpt-4o"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lectern::gateway::{
    Backend, HttpBackend, RecordingBackend, ReplayBackend, ScriptedBackend, API_BASE_ENV,
    API_KEY_ENV,
};
use lectern::Gateway;
use serde::Deserialize;

use crate::error::{Classify, CliError};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    pub backbone: Option<String>,
    pub mapper: Option<String>,
    pub embed_backend: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendSpec {
    /// OpenAI-compatible HTTP endpoint.
    Http {
        model: String,
        #[serde(default = "default_base_env")]
        base_url_env: String,
        #[serde(default = "default_key_env")]
        api_key_env: String,
        embed_model: Option<String>,
    },
    /// Rule file for [`ScriptedBackend::load`].
    Scripted {
        script: PathBuf,
        #[serde(default = "default_scripted_model")]
        model: String,
        embed_model: Option<String>,
    },
    /// Serve answers from a recorded cassette only.
    Replay {
        cassette: PathBuf,
        model: String,
        embed_model: Option<String>,
    },
    /// Wrap another named backend and record every call.
    Record { inner: String, cassette: PathBuf },
}

fn default_base_env() -> String {
    API_BASE_ENV.to_string()
}

fn default_key_env() -> String {
    API_KEY_ENV.to_string()
}

fn default_scripted_model() -> String {
    "scripted".to_string()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    defaults: Defaults,
    #[serde(default)]
    backends: BTreeMap<String, BackendSpec>,
}

#[derive(Debug, Clone)]
pub struct Registry {
    pub defaults: Defaults,
    pub backends: BTreeMap<String, BackendSpec>,
    base_dir: PathBuf,
}

/// A backend with its chat model id and optional embedding model id.
type Resolved = (Arc<dyn Backend>, String, Option<String>);

impl Registry {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&raw, base_dir)
            .map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.source)))
    }

    pub fn parse(raw: &str, base_dir: PathBuf) -> Result<Self, CliError> {
        let file: ConfigFile = toml::from_str(raw).or_usage()?;
        Ok(Self {
            defaults: file.defaults,
            backends: file.backends,
            base_dir,
        })
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn spec(&self, name: &str) -> Result<&BackendSpec, CliError> {
        self.backends.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.backends.keys().map(String::as_str).collect();
            CliError::usage(format!(
                "backend `{name}` is not defined in the config (known: {})",
                if known.is_empty() {
                    "none".to_string()
                } else {
                    known.join(", ")
                }
            ))
        })
    }

    /// Backend plus its chat and embedding model ids.
    fn backend(&self, name: &str, depth: usize) -> Result<Resolved, CliError> {
        if depth > 4 {
            return Err(CliError::usage(format!(
                "backend `{name}`: record chain is too deep"
            )));
        }
        Ok(match self.spec(name)? {
            BackendSpec::Http {
                model,
                base_url_env,
                api_key_env,
                embed_model,
            } => (
                Arc::new(HttpBackend::from_env_vars(base_url_env, api_key_env).or_usage()?),
                model.clone(),
                embed_model.clone(),
            ),
            BackendSpec::Scripted {
                script,
                model,
                embed_model,
            } => (
                Arc::new(ScriptedBackend::load(&self.resolve(script)).or_usage()?),
                model.clone(),
                embed_model.clone(),
            ),
            BackendSpec::Replay {
                cassette,
                model,
                embed_model,
            } => (
                Arc::new(ReplayBackend::open(&self.resolve(cassette)).or_usage()?),
                model.clone(),
                embed_model.clone(),
            ),
            BackendSpec::Record { inner, cassette } => {
                let (backend, model, embed_model) = self.backend(inner, depth + 1)?;
                let recorder =
                    RecordingBackend::new(backend, &self.resolve(cassette)).or_usage()?;
                (Arc::new(recorder), model, embed_model)
            }
        })
    }

    pub fn gateway(&self, name: &str) -> Result<Gateway, CliError> {
        let (backend, model, embed_model) = self.backend(name, 0)?;
        let gateway = Gateway::from_shared(backend, model);
        Ok(match embed_model {
            Some(embed) => gateway.with_embed_model(embed),
            None => gateway,
        })
    }
}
