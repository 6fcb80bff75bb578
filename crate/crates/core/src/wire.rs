//! Participant wire protocol: one JSON envelope per line, tagged by `type`.
//!
//! The envelope set is closed. Inbound lines whose type is not a
//! client-to-server type are answered with an `error` envelope.
//! No envelope carries sentiment data.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::options::{AnswerOption, OptionId};

pub const CLIENT_TYPES: [&str; 3] = ["join", "chat", "survey_response"];
pub const SERVER_TYPES: [&str; 6] = [
    "room_assigned",
    "message",
    "timer",
    "survey_open",
    "session_end",
    "error",
];

/// Label shown for observer-authored messages.
pub const OBSERVER_LABEL: &str = "AI observer";

/// Upper bound on one inbound line, in bytes.
pub const MAX_LINE_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientEnvelope {
    Join {
        session_id: String,
        display_name: String,
    },
    Chat {
        text: String,
    },
    SurveyResponse {
        option_id: OptionId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorKind {
    Human,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerEnvelope {
    RoomAssigned {
        room_id: u32,
        member_names: Vec<String>,
    },
    Message {
        seq: u64,
        t: f64,
        author_kind: AuthorKind,
        author_label: String,
        text: String,
    },
    Timer {
        remaining_s: f64,
    },
    SurveyOpen {
        options: Vec<AnswerOption>,
    },
    SessionEnd {},
    Error {
        code: String,
        detail: String,
    },
}

impl ServerEnvelope {
    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        ServerEnvelope::Error {
            code: code.to_owned(),
            detail: detail.into(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            ServerEnvelope::RoomAssigned { .. } => "room_assigned",
            ServerEnvelope::Message { .. } => "message",
            ServerEnvelope::Timer { .. } => "timer",
            ServerEnvelope::SurveyOpen { .. } => "survey_open",
            ServerEnvelope::SessionEnd {} => "session_end",
            ServerEnvelope::Error { .. } => "error",
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }
}

impl ClientEnvelope {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JoinBody {
    session_id: String,
    display_name: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatBody {
    text: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurveyBody {
    option_id: OptionId,
}

/// Decodes one inbound line. Failures come back as the `error` envelope to
/// send to the client: `unknown_type` for a type outside the client set,
/// `bad_envelope` for anything else malformed.
pub fn parse_client_line(line: &str) -> Result<ClientEnvelope, ServerEnvelope> {
    if line.len() > MAX_LINE_BYTES {
        return Err(ServerEnvelope::error("bad_envelope", "envelope too large"));
    }
    let value: Value = serde_json::from_str(line.trim())
        .map_err(|e| ServerEnvelope::error("bad_envelope", format!("not valid JSON: {e}")))?;
    let Value::Object(mut map) = value else {
        return Err(ServerEnvelope::error(
            "bad_envelope",
            "envelope must be a JSON object",
        ));
    };
    let ty = match map.remove("type") {
        Some(Value::String(s)) => s,
        _ => {
            return Err(ServerEnvelope::error(
                "bad_envelope",
                "missing string field \"type\"",
            ))
        }
    };
    let body = Value::Object(map);
    let bad = |e: serde_json::Error| ServerEnvelope::error("bad_envelope", format!("{ty}: {e}"));
    match ty.as_str() {
        "join" => {
            let b: JoinBody = serde_json::from_value(body).map_err(bad)?;
            Ok(ClientEnvelope::Join {
                session_id: b.session_id,
                display_name: b.display_name,
            })
        }
        "chat" => {
            let b: ChatBody = serde_json::from_value(body).map_err(bad)?;
            Ok(ClientEnvelope::Chat { text: b.text })
        }
        "survey_response" => {
            let b: SurveyBody = serde_json::from_value(body).map_err(bad)?;
            Ok(ClientEnvelope::SurveyResponse {
                option_id: b.option_id,
            })
        }
        other => Err(ServerEnvelope::error(
            "unknown_type",
            format!("unsupported envelope type {other:?}"),
        )),
    }
}

/// Decodes one outbound line, as a client would.
pub fn parse_server_line(line: &str) -> Result<ServerEnvelope, serde_json::Error> {
    let value: Value = serde_json::from_str(line.trim())?;
    if let Value::Object(map) = &value {
        if let Some(Value::String(ty)) = map.get("type") {
            if !SERVER_TYPES.contains(&ty.as_str()) {
                return Err(serde::de::Error::custom(format!("unknown type {ty:?}")));
            }
        }
    }
    serde_json::from_value(value)
}

/// Splits a chunk into envelope lines, skipping blanks.
pub fn lines(chunk: &str) -> impl Iterator<Item = &str> {
    chunk.split('\n').map(str::trim).filter(|l| !l.is_empty())
}
