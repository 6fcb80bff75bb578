//! Conversational swarm engine.
//!
//! A large population is split into small chat rooms wired into a directed
//! ring. Each room has an observer agent that periodically distills the
//! room's dialog and re-voices it, in first person, in the next room. A
//! session-wide sentiment tracker scores support for a fixed set of answer
//! options and produces a weighted group estimate, which can be compared
//! against a survey baseline.
//!
//! Everything here runs on a logical clock, so a full session can be stepped
//! deterministically by [`sim`] or driven from wall time by a network front
//! end.

pub mod config;
pub mod counting;
pub mod deliberation;
pub mod error;
pub mod options;
pub mod persist;
pub mod relay;
pub mod sentiment;
pub mod session;
pub mod sim;
pub mod stats;
pub mod survey;
pub mod topology;
pub mod wire;

pub use config::SwarmConfig;
pub use deliberation::Deliberation;
pub use error::{Error, Result};
pub use options::{AnswerOption, OptionId};
pub use relay::{Distillation, Distiller, DistillerBinding, MockDistiller};
pub use sentiment::{DeliberationResult, SentimentSnapshot};
pub use session::{Author, DueEvent, Message, ParticipantId, Phase, RoomId, SessionState};
pub use survey::{ErrorReport, SurveyResult};
pub use topology::{PartitionPlan, Topology, TopologyKind};
