//! Network front door for live sessions.
//!
//! Participants connect over a WebSocket at `/ws` and exchange the
//! line-delimited envelopes of [`csi_core::wire`]. Operators use plain HTTP:
//!
//! | method | path                      |                                      |
//! |--------|---------------------------|--------------------------------------|
//! | POST   | `/sessions`               | create a session                     |
//! | POST   | `/sessions/{id}/start`    | start before the lobby fills         |
//! | GET    | `/sessions/{id}/status`   | phase, clock, counts                 |
//! | GET    | `/sessions/{id}/export`   | transcripts and result               |

pub mod http;
pub mod hub;
pub mod llm;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use csi_core::relay::DistillerBinding;

pub use http::{router, CreateSession};
pub use hub::{Hub, LivePhase, LiveSession, Mode, Reject, Status};

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub bind: SocketAddr,
    pub storage_dir: PathBuf,
    /// Wall-clock length of one second of session time.
    pub tick: Duration,
    pub distiller: DistillerBinding,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            storage_dir: PathBuf::from("sessions"),
            tick: Duration::from_secs(1),
            distiller: DistillerBinding::mock(),
        }
    }
}

impl GatewayConfig {
    /// Reads `CSI_BIND`, `CSI_STORAGE_DIR`, `CSI_TICK_MS` and the distiller
    /// variables; anything unset keeps its default.
    pub fn from_env() -> csi_core::Result<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> csi_core::Result<Self> {
        let bad = |what: &str, v: &str| csi_core::Error::Config(format!("bad {what} {v:?}"));
        let mut cfg = Self {
            distiller: DistillerBinding::from_lookup(&get)?,
            ..Self::default()
        };
        if let Some(v) = get("CSI_BIND") {
            cfg.bind = v.parse().map_err(|_| bad("bind address", &v))?;
        }
        if let Some(v) = get("CSI_STORAGE_DIR") {
            cfg.storage_dir = PathBuf::from(v);
        }
        if let Some(v) = get("CSI_TICK_MS") {
            let ms: u64 = v
                .parse()
                .ok()
                .filter(|ms| *ms > 0)
                .ok_or_else(|| bad("tick", &v))?;
            cfg.tick = Duration::from_millis(ms);
        }
        Ok(cfg)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] csi_core::Error),
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

pub struct Running {
    pub addr: SocketAddr,
    pub hub: Arc<Hub>,
    pub task: tokio::task::JoinHandle<std::io::Result<()>>,
}

/// Binds and serves in the background.
pub async fn spawn(config: GatewayConfig) -> Result<Running, ServeError> {
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|source| ServeError::Bind {
            addr: config.bind,
            source,
        })?;
    let addr = listener.local_addr()?;
    let state = http::AppState::new(config)?;
    let hub = state.hub.clone();
    let app = router(state);
    let task = tokio::spawn(async move { axum::serve(listener, app).await });
    tracing::info!(%addr, "gateway listening");
    Ok(Running { addr, hub, task })
}

/// Binds and serves until the server stops.
pub async fn serve(config: GatewayConfig) -> Result<(), ServeError> {
    let running = spawn(config).await?;
    running
        .task
        .await
        .map_err(|e| ServeError::Io(std::io::Error::other(e)))??;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_config() {
        let cfg = GatewayConfig::from_lookup(|k| match k {
            "CSI_BIND" => Some("0.0.0.0:9000".into()),
            "CSI_TICK_MS" => Some("20".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.bind.port(), 9000);
        assert_eq!(cfg.tick, Duration::from_millis(20));
        assert!(GatewayConfig::from_lookup(|k| (k == "CSI_TICK_MS").then(|| "0".into())).is_err());
        assert!(
            GatewayConfig::from_lookup(|k| (k == "CSI_BIND").then(|| "nowhere".into())).is_err()
        );
    }
}
