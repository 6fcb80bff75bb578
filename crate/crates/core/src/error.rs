use std::io;

use thiserror::Error;

use crate::session::{ParticipantId, RoomId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("participant {participant} is not allowed to post in room {room}")]
    Unauthorized {
        participant: ParticipantId,
        room: RoomId,
    },

    #[error("observer of room {from} has no edge into room {target}")]
    NoSuchEdge { from: RoomId, target: RoomId },

    #[error("room {0} does not exist")]
    UnknownRoom(RoomId),

    #[error("session is closed")]
    SessionClosed,

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),

    #[error("degenerate sample: {0}")]
    DegenerateSample(&'static str),

    #[error("contract violation: {0}")]
    Contract(&'static str),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
