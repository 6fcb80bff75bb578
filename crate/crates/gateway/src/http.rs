use std::sync::Arc;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use csi_core::wire::{lines, parse_client_line, ClientEnvelope, ServerEnvelope};
use csi_core::{AnswerOption, ParticipantId, SwarmConfig};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc::unbounded_channel;

use crate::hub::{Hub, LiveSession, Mode, Reject};
use crate::llm::ExternalDistiller;
use crate::GatewayConfig;

#[derive(Clone)]
pub struct AppState {
    pub hub: Arc<Hub>,
    pub config: Arc<GatewayConfig>,
    external: Option<ExternalDistiller>,
}

impl AppState {
    pub fn new(config: GatewayConfig) -> csi_core::Result<Self> {
        let external = ExternalDistiller::from_binding(&config.distiller)?;
        Ok(Self {
            hub: Arc::new(Hub::default()),
            config: Arc::new(config),
            external,
        })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/start", post(start_session))
        .route("/sessions/{id}/status", get(status))
        .route("/sessions/{id}/export", get(export))
        .with_state(state)
}

/// Body of `POST /sessions`. Unset tunables keep their defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub session_id: Option<String>,
    pub participants: usize,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub min_size: Option<usize>,
    #[serde(default)]
    pub max_size: Option<usize>,
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub relay_interval: Option<f64>,
    #[serde(default)]
    pub snapshot_interval: Option<f64>,
    #[serde(default)]
    pub options: Option<Vec<AnswerOption>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl CreateSession {
    fn swarm_config(&self) -> SwarmConfig {
        let d = SwarmConfig::default();
        SwarmConfig {
            min_size: self.min_size.unwrap_or(d.min_size),
            max_size: self.max_size.unwrap_or(d.max_size),
            duration: self.duration.unwrap_or(d.duration),
            relay_interval: self.relay_interval.unwrap_or(d.relay_interval),
            snapshot_interval: self.snapshot_interval.unwrap_or(d.snapshot_interval),
            options: self.options.clone().unwrap_or(d.options),
            seed: self.seed.unwrap_or(d.seed),
            ..d
        }
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<Reject> for ApiError {
    fn from(r: Reject) -> Self {
        let code = match r {
            Reject::UnknownSession(_) => StatusCode::NOT_FOUND,
            Reject::SessionOver | Reject::AlreadyStarted => StatusCode::CONFLICT,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError(code, r.to_string())
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

async fn create_session(
    State(st): State<AppState>,
    Json(body): Json<CreateSession>,
) -> Result<Response, ApiError> {
    let id = body.session_id.clone().unwrap_or_else(|| st.hub.fresh_id());
    if !valid_id(&id) {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            format!("bad session id {id:?}"),
        ));
    }
    let live = LiveSession::new(id, body.mode, body.participants, body.swarm_config())
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let live = st
        .hub
        .insert(live)
        .map_err(|e| ApiError(StatusCode::CONFLICT, e.to_string()))?;
    Ok((StatusCode::CREATED, Json(live.status())).into_response())
}

async fn start_session(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let live = st.hub.get(&id)?;
    if !launch(&st, &live)? {
        return Err(ApiError(
            StatusCode::CONFLICT,
            "session already started".into(),
        ));
    }
    Ok(Json(live.status()).into_response())
}

async fn status(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(st.hub.get(&id)?.status()).into_response())
}

async fn export(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(st.hub.get(&id)?.export()).into_response())
}

/// Starts the session and its clock driver. False if it was already running.
fn launch(st: &AppState, live: &Arc<LiveSession>) -> Result<bool, Reject> {
    let started = live.start()?;
    if started {
        tokio::spawn(drive(st.clone(), live.clone()));
    }
    Ok(started)
}

/// Advances the session one second per configured tick until it closes,
/// then persists it.
async fn drive(st: AppState, live: Arc<LiveSession>) {
    let mut clock = tokio::time::interval(st.config.tick);
    clock.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    clock.tick().await;
    loop {
        clock.tick().await;
        let tick = match live.tick(1.0, st.external.is_none()) {
            Ok(t) => t,
            Err(e) => {
                tracing::error!(session = %live.id, "session driver stopped: {e}");
                return;
            }
        };
        for job in tick.relay_jobs {
            let (ext, live) = (
                st.external
                    .clone()
                    .expect("deferred relays imply an external distiller"),
                live.clone(),
            );
            tokio::spawn(async move {
                if let Some(d) = ext.distill(&job, live.options()).await {
                    if let Err(e) = live.apply_relay(&job, &d) {
                        tracing::warn!(session = %live.id, "relay rejected: {e}");
                    }
                }
            });
        }
        if tick.closed {
            break;
        }
    }
    let dir = st.config.storage_dir.join(&live.id);
    let saver = live.clone();
    match tokio::task::spawn_blocking(move || saver.persist_to(dir)).await {
        Ok(Ok(())) => tracing::info!(session = %live.id, "session persisted"),
        Ok(Err(e)) => tracing::error!(session = %live.id, "persist failed: {e}"),
        Err(e) => tracing::error!(session = %live.id, "persist task failed: {e}"),
    }
}

async fn ws_upgrade(State(st): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| participant(st, socket))
}

async fn participant(st: AppState, socket: WebSocket) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = unbounded_channel::<ServerEnvelope>();
    let writer = tokio::spawn(async move {
        while let Some(env) = rx.recv().await {
            let mut line = env.to_line();
            line.push('\n');
            if sink.send(WsMessage::Text(line.into())).await.is_err() {
                break;
            }
        }
    });

    let mut seat: Option<(Arc<LiveSession>, ParticipantId)> = None;
    while let Some(Ok(frame)) = stream.next().await {
        let text = match frame {
            WsMessage::Text(t) => t,
            WsMessage::Binary(_) => {
                let _ = tx.send(ServerEnvelope::error("bad_envelope", "envelopes are text"));
                continue;
            }
            WsMessage::Close(_) => break,
            _ => continue,
        };
        for line in lines(text.as_str()) {
            let env = match parse_client_line(line) {
                Ok(env) => env,
                Err(reply) => {
                    let _ = tx.send(reply);
                    continue;
                }
            };
            if let Err(r) = handle(&st, &mut seat, env, &tx) {
                let _ = tx.send(r.envelope());
            }
        }
    }
    writer.abort();
}

fn handle(
    st: &AppState,
    seat: &mut Option<(Arc<LiveSession>, ParticipantId)>,
    env: ClientEnvelope,
    tx: &crate::hub::Outbox,
) -> Result<(), Reject> {
    match (env, seat.as_ref()) {
        (ClientEnvelope::Join { .. }, Some(_)) => Err(Reject::AlreadyJoined),
        (
            ClientEnvelope::Join {
                session_id,
                display_name,
            },
            None,
        ) => {
            let live = st.hub.get(&session_id)?;
            let (id, full) = live.join(&display_name, tx.clone())?;
            if full {
                launch(st, &live)?;
            }
            *seat = Some((live, id));
            Ok(())
        }
        (_, None) => Err(Reject::NotJoined),
        (ClientEnvelope::Chat { text }, Some((live, id))) => live.chat(*id, &text).map(drop),
        (ClientEnvelope::SurveyResponse { option_id }, Some((live, id))) => {
            if live.survey_response(*id, option_id)? {
                tracing::debug!(session = %live.id, "all survey responses in");
            }
            Ok(())
        }
    }
}
