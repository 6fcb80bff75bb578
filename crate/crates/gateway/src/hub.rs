//! Live session registry. Every mutation of a session happens under that
//! session's lock, and fan-out is pushed into per-client queues before the
//! lock is released, so each receiver sees its room in seq order.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use csi_core::persist::persist;
use csi_core::relay::RelayJob;
use csi_core::survey::{woc_mean, SurveyResult};
use csi_core::wire::{AuthorKind, ServerEnvelope, OBSERVER_LABEL};
use csi_core::{
    Author, Deliberation, DeliberationResult, Distillation, DueEvent, OptionId, ParticipantId,
    Phase, RoomId, SessionState, SwarmConfig,
};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc::UnboundedSender;

pub type Outbox = UnboundedSender<ServerEnvelope>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Csi,
    Survey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LivePhase {
    Lobby,
    Running,
    Closed,
}

/// Rejections sent back to a client as `error` envelopes.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Reject {
    #[error("no session {0:?}")]
    UnknownSession(String),
    #[error("name {0:?} is already taken")]
    DuplicateName(String),
    #[error("display name must not be empty")]
    EmptyName,
    #[error("session has already started")]
    AlreadyStarted,
    #[error("session is over")]
    SessionOver,
    #[error("join first")]
    NotJoined,
    #[error("already joined")]
    AlreadyJoined,
    #[error("not accepted in {0:?} mode")]
    WrongMode(Mode),
    #[error("{0}")]
    Rejected(String),
}

impl Reject {
    pub fn code(&self) -> &'static str {
        match self {
            Reject::UnknownSession(_) => "unknown_session",
            Reject::DuplicateName(_) => "duplicate_name",
            Reject::EmptyName => "bad_name",
            Reject::AlreadyStarted => "session_started",
            Reject::SessionOver => "session_over",
            Reject::NotJoined => "not_joined",
            Reject::AlreadyJoined => "already_joined",
            Reject::WrongMode(_) => "wrong_mode",
            Reject::Rejected(_) => "rejected",
        }
    }

    pub fn envelope(&self) -> ServerEnvelope {
        ServerEnvelope::error(self.code(), self.to_string())
    }
}

struct Seat {
    name: String,
    outbox: Option<Outbox>,
}

struct Inner {
    phase: LivePhase,
    seats: Vec<Seat>,
    delib: Option<Deliberation>,
    delivered: Vec<usize>,
    survey: Option<SurveyResult>,
    survey_clock: f64,
    result: Option<DeliberationResult>,
    persisted: Option<PathBuf>,
    persist_error: Option<String>,
}

pub struct LiveSession {
    pub id: String,
    pub mode: Mode,
    pub expected: usize,
    pub config: SwarmConfig,
    inner: Mutex<Inner>,
}

/// What one driver tick produced.
#[derive(Debug, Default)]
pub struct Tick {
    pub relay_jobs: Vec<RelayJob>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub session_id: String,
    pub mode: Mode,
    pub phase: LivePhase,
    pub expected: usize,
    pub joined: usize,
    pub rooms: usize,
    pub clock: f64,
    pub remaining_s: f64,
    pub messages: usize,
    pub persisted: Option<PathBuf>,
    pub persist_error: Option<String>,
}

/// Operator view of a session: transcripts plus whatever result exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Export {
    pub status: Status,
    pub names: Vec<String>,
    pub assignments: Vec<u32>,
    pub transcripts: Vec<Vec<csi_core::Message>>,
    pub result: Option<DeliberationResult>,
    pub survey: Option<SurveyExport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyExport {
    pub responses: Vec<(u64, OptionId)>,
    pub woc_estimate: Option<f64>,
}

fn send(seat: &Seat, env: ServerEnvelope) {
    if let Some(tx) = &seat.outbox {
        // A closed queue means the client went away; it may rejoin.
        let _ = tx.send(env);
    }
}

fn message_envelope(seats: &[Seat], m: &csi_core::Message) -> ServerEnvelope {
    let (author_kind, author_label) = match m.author {
        Author::Human(p) => (AuthorKind::Human, seats[p.0 as usize].name.clone()),
        Author::Observer(_) => (AuthorKind::Observer, OBSERVER_LABEL.to_owned()),
    };
    ServerEnvelope::Message {
        seq: m.seq,
        t: m.t,
        author_kind,
        author_label,
        text: m.text.clone(),
    }
}

impl Inner {
    fn session(&self) -> Option<&SessionState> {
        self.delib.as_ref().map(Deliberation::session)
    }

    /// Pushes every not-yet-delivered room message to that room's members.
    fn flush(&mut self) {
        let Some(delib) = &self.delib else { return };
        let session = delib.session();
        for (r, transcript) in session.transcripts().iter().enumerate() {
            let fresh = &transcript[self.delivered[r]..];
            if fresh.is_empty() {
                continue;
            }
            let members = session.members(RoomId(r as u32));
            for m in fresh {
                let env = message_envelope(&self.seats, m);
                for p in &members {
                    send(&self.seats[p.0 as usize], env.clone());
                }
            }
            self.delivered[r] = transcript.len();
        }
    }

    fn room_assigned(&self, p: ParticipantId) -> Option<ServerEnvelope> {
        let session = self.session()?;
        let room = session.room_of(p)?;
        let member_names = session
            .members(room)
            .iter()
            .map(|m| self.seats[m.0 as usize].name.clone())
            .collect();
        Some(ServerEnvelope::RoomAssigned {
            room_id: room.0,
            member_names,
        })
    }

    fn broadcast(&self, env: &ServerEnvelope) {
        for seat in &self.seats {
            send(seat, env.clone());
        }
    }
}

impl LiveSession {
    pub fn new(
        id: String,
        mode: Mode,
        expected: usize,
        config: SwarmConfig,
    ) -> csi_core::Result<Self> {
        config.validate()?;
        if expected == 0 {
            return Err(csi_core::Error::Config(
                "expected participant count must be at least 1".into(),
            ));
        }
        Ok(Self {
            id,
            mode,
            expected,
            config,
            inner: Mutex::new(Inner {
                phase: LivePhase::Lobby,
                seats: Vec::new(),
                delib: None,
                delivered: Vec::new(),
                survey: None,
                survey_clock: 0.0,
                result: None,
                persisted: None,
                persist_error: None,
            }),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn phase(&self) -> LivePhase {
        self.lock().phase
    }

    /// Seats a participant. Returns their id and whether the lobby just
    /// filled up (the caller then starts the driver). A name whose previous
    /// channel has gone away reclaims its seat and receives a full replay.
    pub fn join(&self, name: &str, outbox: Outbox) -> Result<(ParticipantId, bool), Reject> {
        let name = name.trim();
        if name.is_empty() {
            return Err(Reject::EmptyName);
        }
        let mut inner = self.lock();
        if let Some(i) = inner.seats.iter().position(|s| s.name == name) {
            let live = inner.seats[i]
                .outbox
                .as_ref()
                .is_some_and(|tx| !tx.is_closed());
            if live || inner.phase == LivePhase::Lobby {
                return Err(Reject::DuplicateName(name.to_owned()));
            }
            if inner.phase == LivePhase::Closed {
                return Err(Reject::SessionOver);
            }
            inner.seats[i].outbox = Some(outbox);
            self.replay(&inner, ParticipantId(i as u64));
            return Ok((ParticipantId(i as u64), false));
        }
        match inner.phase {
            LivePhase::Lobby => {}
            LivePhase::Running => return Err(Reject::AlreadyStarted),
            LivePhase::Closed => return Err(Reject::SessionOver),
        }
        inner.seats.push(Seat {
            name: name.to_owned(),
            outbox: Some(outbox),
        });
        let id = ParticipantId(inner.seats.len() as u64 - 1);
        Ok((id, inner.seats.len() == self.expected))
    }

    fn replay(&self, inner: &Inner, p: ParticipantId) {
        let seat = &inner.seats[p.0 as usize];
        match self.mode {
            Mode::Csi => {
                let Some(session) = inner.session() else {
                    return;
                };
                if let Some(env) = inner.room_assigned(p) {
                    send(seat, env);
                }
                let room = session.room_of(p).expect("seated participant has a room");
                for m in
                    &session.transcript(room).expect("room exists")[..inner.delivered[room.index()]]
                {
                    send(seat, message_envelope(&inner.seats, m));
                }
                send(
                    seat,
                    ServerEnvelope::Timer {
                        remaining_s: session.remaining(),
                    },
                );
            }
            Mode::Survey => {
                send(
                    seat,
                    ServerEnvelope::SurveyOpen {
                        options: self.config.options.clone(),
                    },
                );
                send(
                    seat,
                    ServerEnvelope::Timer {
                        remaining_s: self.survey_remaining(inner),
                    },
                );
            }
        }
    }

    fn survey_remaining(&self, inner: &Inner) -> f64 {
        (self.config.duration - inner.survey_clock).max(0.0)
    }

    /// Leaves the lobby: partitions the joined participants and announces
    /// rooms (or opens the survey). Returns false if already started.
    pub fn start(&self) -> Result<bool, Reject> {
        let mut inner = self.lock();
        match inner.phase {
            LivePhase::Lobby => {}
            LivePhase::Running => return Ok(false),
            LivePhase::Closed => return Err(Reject::SessionOver),
        }
        if inner.seats.is_empty() {
            return Err(Reject::Rejected("nobody has joined".into()));
        }
        match self.mode {
            Mode::Csi => {
                let ids = (0..inner.seats.len() as u64).map(ParticipantId).collect();
                let session = SessionState::create(self.config.clone(), ids)
                    .map_err(|e| Reject::Rejected(e.to_string()))?;
                inner.delivered = vec![0; session.room_count()];
                inner.delib = Some(Deliberation::new(session));
                for i in 0..inner.seats.len() {
                    if let Some(env) = inner.room_assigned(ParticipantId(i as u64)) {
                        send(&inner.seats[i], env);
                    }
                }
                inner.broadcast(&ServerEnvelope::Timer {
                    remaining_s: self.config.duration,
                });
            }
            Mode::Survey => {
                inner.survey = Some(SurveyResult::new(self.config.options.clone()));
                inner.broadcast(&ServerEnvelope::SurveyOpen {
                    options: self.config.options.clone(),
                });
                inner.broadcast(&ServerEnvelope::Timer {
                    remaining_s: self.config.duration,
                });
            }
        }
        inner.phase = LivePhase::Running;
        Ok(true)
    }

    pub fn chat(&self, p: ParticipantId, text: &str) -> Result<u64, Reject> {
        if self.mode != Mode::Csi {
            return Err(Reject::WrongMode(self.mode));
        }
        let mut inner = self.lock();
        match inner.phase {
            LivePhase::Lobby => return Err(Reject::Rejected("session has not started".into())),
            LivePhase::Closed => return Err(Reject::SessionOver),
            LivePhase::Running => {}
        }
        let delib = inner.delib.as_mut().expect("running csi session");
        let room = delib.session().room_of(p).ok_or(Reject::NotJoined)?;
        let seq = delib
            .session_mut()
            .post_message(room, Author::Human(p), text)
            .map_err(|e| Reject::Rejected(e.to_string()))?;
        inner.flush();
        Ok(seq)
    }

    pub fn survey_response(&self, p: ParticipantId, option: OptionId) -> Result<bool, Reject> {
        if self.mode != Mode::Survey {
            return Err(Reject::WrongMode(self.mode));
        }
        let mut inner = self.lock();
        if inner.phase != LivePhase::Running {
            return Err(Reject::Rejected("survey is not open".into()));
        }
        let survey = inner.survey.as_mut().expect("running survey");
        survey
            .respond(p, option)
            .map_err(|e| Reject::Rejected(e.to_string()))?;
        Ok(survey.len() == inner.seats.len())
    }

    /// Advances the session by `dt` seconds of session clock. In CSI mode
    /// relays are distilled inline when `inline_relays` is set; otherwise the
    /// captured windows are returned for the caller to distill.
    pub fn tick(&self, dt: f64, inline_relays: bool) -> csi_core::Result<Tick> {
        let mut inner = self.lock();
        if inner.phase != LivePhase::Running {
            return Ok(Tick {
                relay_jobs: Vec::new(),
                closed: inner.phase == LivePhase::Closed,
            });
        }
        let mut out = Tick::default();
        match self.mode {
            Mode::Csi => {
                let delib = inner.delib.as_mut().expect("running csi session");
                let events = if inline_relays {
                    delib.advance(dt)?
                } else {
                    let (events, jobs) = delib.advance_deferred(dt)?;
                    out.relay_jobs = jobs;
                    events
                };
                let ended = events
                    .iter()
                    .any(|e| matches!(e, DueEvent::SessionEnd { .. }));
                inner.flush();
                let session = inner.session().expect("running csi session");
                let remaining = session.remaining();
                inner.broadcast(&ServerEnvelope::Timer {
                    remaining_s: remaining,
                });
                if ended {
                    inner.result = Some(inner.delib.as_ref().expect("csi").result()?);
                    out.closed = true;
                }
            }
            Mode::Survey => {
                inner.survey_clock = (inner.survey_clock + dt).min(self.config.duration);
                let all_in = inner
                    .survey
                    .as_ref()
                    .is_some_and(|s| s.len() == inner.seats.len());
                let remaining = if all_in {
                    0.0
                } else {
                    self.survey_remaining(&inner)
                };
                inner.broadcast(&ServerEnvelope::Timer {
                    remaining_s: remaining,
                });
                out.closed = remaining <= 0.0;
            }
        }
        if out.closed {
            inner.phase = LivePhase::Closed;
            inner.broadcast(&ServerEnvelope::SessionEnd {});
        }
        Ok(out)
    }

    /// Posts a distilled relay if the session is still open. Results that
    /// arrive after close are dropped.
    pub fn apply_relay(&self, job: &RelayJob, d: &Distillation) -> csi_core::Result<Option<u64>> {
        let mut inner = self.lock();
        let Some(delib) = inner.delib.as_mut() else {
            return Ok(None);
        };
        if delib.session().phase() != Phase::Open {
            return Ok(None);
        }
        let seq = delib.apply_relay(job, d)?;
        inner.flush();
        Ok(seq)
    }

    pub fn options(&self) -> &[csi_core::AnswerOption] {
        &self.config.options
    }

    /// Writes transcripts and manifest of a closed CSI session (or the survey
    /// responses) under `dir`. Failures are kept for the status endpoint.
    pub fn persist_to(&self, dir: PathBuf) -> csi_core::Result<()> {
        let mut inner = self.lock();
        let outcome = match (&inner.delib, &inner.survey) {
            (Some(delib), _) => persist(delib.session(), inner.result.as_ref(), &dir).map(|_| ()),
            (None, Some(survey)) => std::fs::create_dir_all(&dir)
                .map_err(csi_core::Error::from)
                .and_then(|()| {
                    let body = serde_json::to_vec_pretty(&survey_export(survey))?;
                    csi_core::persist::write_atomic(&dir.join("survey.json"), &body)
                }),
            (None, None) => Ok(()),
        };
        match outcome {
            Ok(()) => {
                inner.persisted = Some(dir);
                inner.persist_error = None;
                Ok(())
            }
            Err(e) => {
                inner.persist_error = Some(e.to_string());
                Err(e)
            }
        }
    }

    pub fn status(&self) -> Status {
        let inner = self.lock();
        self.status_of(&inner)
    }

    fn status_of(&self, inner: &Inner) -> Status {
        let session = inner.session();
        let (clock, remaining_s) = match (self.mode, session) {
            (Mode::Csi, Some(s)) => (s.clock(), s.remaining()),
            (Mode::Survey, _) => (inner.survey_clock, self.survey_remaining(inner)),
            (Mode::Csi, None) => (0.0, self.config.duration),
        };
        Status {
            session_id: self.id.clone(),
            mode: self.mode,
            phase: inner.phase,
            expected: self.expected,
            joined: inner.seats.len(),
            rooms: session.map_or(0, SessionState::room_count),
            clock,
            remaining_s,
            messages: session.map_or(0, |s| s.transcripts().iter().map(Vec::len).sum()),
            persisted: inner.persisted.clone(),
            persist_error: inner.persist_error.clone(),
        }
    }

    pub fn export(&self) -> Export {
        let inner = self.lock();
        let session = inner.session();
        Export {
            status: self.status_of(&inner),
            names: inner.seats.iter().map(|s| s.name.clone()).collect(),
            assignments: session.map_or_else(Vec::new, |s| {
                s.plan().assignments.iter().map(|r| r.0).collect()
            }),
            transcripts: session.map_or_else(Vec::new, |s| s.transcripts().to_vec()),
            result: inner.result.clone(),
            survey: inner.survey.as_ref().map(survey_export),
        }
    }
}

fn survey_export(s: &SurveyResult) -> SurveyExport {
    SurveyExport {
        responses: s.responses.iter().map(|(p, o)| (p.0, *o)).collect(),
        woc_estimate: woc_mean(s).ok(),
    }
}

#[derive(Default)]
pub struct Hub {
    sessions: Mutex<HashMap<String, Arc<LiveSession>>>,
    counter: Mutex<u64>,
}

impl Hub {
    pub fn insert(&self, session: LiveSession) -> Result<Arc<LiveSession>, Reject> {
        let mut map = self.sessions.lock().unwrap_or_else(|p| p.into_inner());
        if map.contains_key(&session.id) {
            return Err(Reject::Rejected(format!("session {:?} exists", session.id)));
        }
        let live = Arc::new(session);
        map.insert(live.id.clone(), live.clone());
        Ok(live)
    }

    pub fn get(&self, id: &str) -> Result<Arc<LiveSession>, Reject> {
        let map = self.sessions.lock().unwrap_or_else(|p| p.into_inner());
        map.get(id)
            .cloned()
            .ok_or_else(|| Reject::UnknownSession(id.to_owned()))
    }

    pub fn fresh_id(&self) -> String {
        let mut c = self.counter.lock().unwrap_or_else(|p| p.into_inner());
        *c += 1;
        format!("s{}", *c)
    }
}
