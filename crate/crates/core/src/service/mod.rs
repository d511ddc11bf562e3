//! Editing sessions over HTTP.
//!
//! A session owns a canvas and a stack of stroke layers. Add and color
//! strokes start a background intent prediction (latest wins), `run`
//! compiles the visible layers into a condition bundle and generates a
//! result, and `resolve` accepts it into the canvas or drops it. Every
//! mutation is written through to disk when a data directory is configured.

mod api;
mod backend;
mod session;
mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use api::{
    router, AppState, CanvasResponse, CreateSessionRequest, CreateSessionResponse, HealthResponse, LayerInfo,
    ResolveRequest, RunRequest, RunResponse, SessionSummary, StrokeRequest, StrokeResponse,
};
pub use backend::{Backend, MockBackend, ToyDiffusionBackend};
pub use session::{EditParams, GenerationResult, GuessState, GuessStatus, Layer, ParamsPatch, ResultStatus, Session};
pub use store::SessionStore;

use crate::guess::PredictorConfig;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    ToyDiffusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Checkpoint directory, required by `toy_diffusion`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Sessions live only in memory when unset.
    pub data_dir: Option<PathBuf>,
    pub max_width: usize,
    pub max_height: usize,
    pub extractor: String,
    pub backend: BackendConfig,
    pub predictor: PredictorConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: None,
            max_width: 1024,
            max_height: 1024,
            extractor: crate::condition::GRADIENT_EXTRACTOR_ID.to_string(),
            backend: BackendConfig::default(),
            predictor: PredictorConfig::default(),
        }
    }
}

pub const ENV_PREFIX: &str = "BRUSHDIFF_";

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    /// Applies `BRUSHDIFF_*` overrides:
    ///
    /// | variable | effect |
    /// |---|---|
    /// | `BRUSHDIFF_LISTEN` | listen address |
    /// | `BRUSHDIFF_DATA_DIR` | session directory |
    /// | `BRUSHDIFF_MAX_WIDTH`, `BRUSHDIFF_MAX_HEIGHT` | upload limits |
    /// | `BRUSHDIFF_BACKEND` | `mock` or `toy_diffusion` |
    /// | `BRUSHDIFF_CHECKPOINT` | checkpoint directory |
    /// | `BRUSHDIFF_PREDICTOR` | `mock`, or an endpoint URL for the external predictor |
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ServiceError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let bad = |k: &str, v: &str| ServiceError::Config(format!("{ENV_PREFIX}{k}: invalid value `{v}`"));
        for (key, value) in vars {
            let Some(key) = key.as_ref().strip_prefix(ENV_PREFIX) else { continue };
            let value = value.as_ref();
            match key {
                "LISTEN" => self.listen = value.parse().map_err(|_| bad(key, value))?,
                "DATA_DIR" => self.data_dir = Some(PathBuf::from(value)),
                "MAX_WIDTH" => self.max_width = value.parse().map_err(|_| bad(key, value))?,
                "MAX_HEIGHT" => self.max_height = value.parse().map_err(|_| bad(key, value))?,
                "BACKEND" => {
                    self.backend.kind = match value {
                        "mock" => BackendKind::Mock,
                        "toy_diffusion" => BackendKind::ToyDiffusion,
                        _ => return Err(bad(key, value)),
                    }
                }
                "CHECKPOINT" => self.backend.checkpoint = Some(PathBuf::from(value)),
                "PREDICTOR" => {
                    self.predictor = if value == "mock" {
                        PredictorConfig::default()
                    } else {
                        PredictorConfig::External {
                            endpoint: value.to_string(),
                            timeout_ms: 10_000,
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn from_file_and_env(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut config = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        config.apply_env(std::env::vars())?;
        Ok(config)
    }
}

/// Binds `config.listen` and serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::from_config(&config)?;
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides() {
        let mut c = ServiceConfig::default();
        c.apply_env([
            ("BRUSHDIFF_LISTEN", "0.0.0.0:9000"),
            ("BRUSHDIFF_BACKEND", "toy_diffusion"),
            ("BRUSHDIFF_PREDICTOR", "http://localhost:1/guess"),
            ("HOME", "/root"),
        ])
        .unwrap();
        assert_eq!(c.listen.port(), 9000);
        assert_eq!(c.backend.kind, BackendKind::ToyDiffusion);
        assert!(matches!(c.predictor, PredictorConfig::External { .. }));
        assert!(c.apply_env([("BRUSHDIFF_MAX_WIDTH", "wide")]).is_err());
    }
}
