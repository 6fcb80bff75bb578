//! Mutable session state: rooms, transcripts and the logical clock.
//!
//! A [`SessionState`] is one serialization domain. Callers that share it
//! across threads wrap it in a lock; nothing here is internally synchronized.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{boundary, SwarmConfig, TIME_EPS};
use crate::error::{Error, Result};
use crate::topology::{partition, PartitionPlan, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoomId(pub u32);

impl RoomId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for RoomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticipantId(pub u64);

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Author {
    Human(ParticipantId),
    /// Observer agent of the given source room.
    Observer(RoomId),
}

impl Author {
    pub fn is_human(&self) -> bool {
        matches!(self, Author::Human(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub room: RoomId,
    pub author: Author,
    pub text: String,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum DueEvent {
    SnapshotDue { t: f64 },
    RelayDue { t: f64, room: RoomId },
    SessionEnd { t: f64 },
}

impl DueEvent {
    pub fn time(&self) -> f64 {
        match *self {
            DueEvent::SnapshotDue { t }
            | DueEvent::RelayDue { t, .. }
            | DueEvent::SessionEnd { t } => t,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionState {
    config: SwarmConfig,
    plan: PartitionPlan,
    topology: Topology,
    participants: Vec<ParticipantId>,
    positions: HashMap<ParticipantId, usize>,
    transcripts: Vec<Vec<Message>>,
    clock: f64,
    phase: Phase,
    next_snapshot: usize,
    next_relay: usize,
}

impl SessionState {
    /// Partitions `participants` (in the given order) and wires the rooms.
    pub fn create(config: SwarmConfig, participants: Vec<ParticipantId>) -> Result<Self> {
        config.validate()?;
        if participants.is_empty() {
            return Err(Error::Config("participant list is empty".into()));
        }
        let plan = partition(
            participants.len(),
            config.min_size,
            config.max_size,
            config.seed,
        );
        Self::with_plan(config, participants, plan)
    }

    /// Builds a session around an existing partition plan.
    pub fn with_plan(
        config: SwarmConfig,
        participants: Vec<ParticipantId>,
        plan: PartitionPlan,
    ) -> Result<Self> {
        config.validate()?;
        if participants.is_empty() {
            return Err(Error::Config("participant list is empty".into()));
        }
        if plan.participant_count() != participants.len()
            || plan
                .assignments
                .iter()
                .any(|r| r.index() >= plan.room_count())
        {
            return Err(Error::Config(
                "partition plan does not match participants".into(),
            ));
        }
        let mut positions = HashMap::with_capacity(participants.len());
        for (i, p) in participants.iter().enumerate() {
            if positions.insert(*p, i).is_some() {
                return Err(Error::Config(format!("duplicate participant id {p}")));
            }
        }
        let topology = Topology::build(plan.room_count(), config.topology_kind);
        Ok(Self {
            transcripts: vec![Vec::new(); plan.room_count()],
            config,
            plan,
            topology,
            participants,
            positions,
            clock: 0.0,
            phase: Phase::Open,
            next_snapshot: 1,
            next_relay: 1,
        })
    }

    pub fn config(&self) -> &SwarmConfig {
        &self.config
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn participants(&self) -> &[ParticipantId] {
        &self.participants
    }

    pub fn room_count(&self) -> usize {
        self.plan.room_count()
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn remaining(&self) -> f64 {
        (self.config.duration - self.clock).max(0.0)
    }

    pub fn room_of(&self, participant: ParticipantId) -> Option<RoomId> {
        self.positions
            .get(&participant)
            .map(|&i| self.plan.assignments[i])
    }

    pub fn members(&self, room: RoomId) -> Vec<ParticipantId> {
        self.plan
            .members(room)
            .into_iter()
            .map(|i| self.participants[i])
            .collect()
    }

    pub fn transcript(&self, room: RoomId) -> Result<&[Message]> {
        self.transcripts
            .get(room.index())
            .map(Vec::as_slice)
            .ok_or(Error::UnknownRoom(room))
    }

    pub fn transcripts(&self) -> &[Vec<Message>] {
        &self.transcripts
    }

    /// Messages of `room` with `seq >= since_seq`, in order.
    pub fn transcript_window(&self, room: RoomId, since_seq: u64) -> Result<Vec<Message>> {
        let all = self.transcript(room)?;
        let start = (since_seq.min(all.len() as u64)) as usize;
        Ok(all[start..].to_vec())
    }

    /// Appends a message stamped with the current clock and returns its seq.
    pub fn post_message(&mut self, room: RoomId, author: Author, text: &str) -> Result<u64> {
        if self.phase == Phase::Closed {
            return Err(Error::SessionClosed);
        }
        if room.index() >= self.room_count() {
            return Err(Error::UnknownRoom(room));
        }
        if text.trim().is_empty() {
            return Err(Error::Validation("message text is empty".into()));
        }
        match author {
            Author::Human(p) => {
                if self.room_of(p) != Some(room) {
                    return Err(Error::Unauthorized {
                        participant: p,
                        room,
                    });
                }
            }
            Author::Observer(source) => {
                if !self.topology.has_edge(source, room) {
                    return Err(Error::NoSuchEdge {
                        from: source,
                        target: room,
                    });
                }
            }
        }
        let transcript = &mut self.transcripts[room.index()];
        let seq = transcript.len() as u64;
        transcript.push(Message {
            seq,
            room,
            author,
            text: text.to_owned(),
            t: self.clock,
        });
        Ok(seq)
    }

    /// Moves the clock forward and returns every boundary crossed, in order.
    pub fn advance_clock(&mut self, dt: f64) -> Result<Vec<DueEvent>> {
        self.advance_clock_with(dt, |_, _| Ok(()))
    }

    /// Like [`advance_clock`](Self::advance_clock), but runs `on_event` for
    /// each event while the clock reads that event's time. Events due at
    /// exactly `duration` are handled before the session closes, so handlers
    /// may still post.
    pub fn advance_clock_with<F>(&mut self, dt: f64, mut on_event: F) -> Result<Vec<DueEvent>>
    where
        F: FnMut(&mut SessionState, &DueEvent) -> Result<()>,
    {
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(Error::Validation(format!(
                "clock step must be non-negative, got {dt}"
            )));
        }
        let target = self.clock + dt;
        let mut events = Vec::new();
        if self.phase == Phase::Open {
            let horizon = target.min(self.config.duration);
            loop {
                let snap = boundary(self.next_snapshot, self.config.snapshot_interval);
                let relay = boundary(self.next_relay, self.config.relay_interval);
                let next = snap.min(relay);
                if next > horizon + TIME_EPS || next > self.config.duration + TIME_EPS {
                    break;
                }
                self.clock = self.clock.max(next);
                if snap <= relay {
                    self.next_snapshot += 1;
                    let ev = DueEvent::SnapshotDue { t: snap };
                    on_event(self, &ev)?;
                    events.push(ev);
                } else {
                    self.next_relay += 1;
                    for room in 0..self.room_count() {
                        let ev = DueEvent::RelayDue {
                            t: relay,
                            room: RoomId(room as u32),
                        };
                        on_event(self, &ev)?;
                        events.push(ev);
                    }
                }
            }
            if target + TIME_EPS >= self.config.duration {
                self.clock = self.clock.max(self.config.duration);
                let ev = DueEvent::SessionEnd {
                    t: self.config.duration,
                };
                on_event(self, &ev)?;
                events.push(ev);
                self.phase = Phase::Closed;
            }
        }
        self.clock = self.clock.max(target);
        Ok(events)
    }

    /// Ends the session early.
    pub fn close(&mut self) {
        self.phase = Phase::Closed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::options::numeric_options;
    use proptest::prelude::*;

    fn ids(n: u64) -> Vec<ParticipantId> {
        (0..n).map(ParticipantId).collect()
    }

    fn human_in(s: &SessionState, room: RoomId) -> ParticipantId {
        s.members(room)[0]
    }

    #[test]
    fn create_defaults_with_241() {
        let s = SessionState::create(SwarmConfig::default(), ids(241)).unwrap();
        assert_eq!(s.topology().edges.len(), s.room_count());
        assert_eq!(s.clock(), 0.0);
        assert_eq!(s.phase(), Phase::Open);
        assert!(s.transcripts().iter().all(Vec::is_empty));
    }

    #[test]
    fn single_participant_single_room() {
        let s = SessionState::create(SwarmConfig::default(), ids(1)).unwrap();
        assert_eq!(s.room_count(), 1);
        assert!(s.topology().edges.is_empty());
    }

    #[test]
    fn hundred_into_fives() {
        let cfg = SwarmConfig {
            min_size: 5,
            max_size: 5,
            ..SwarmConfig::default()
        };
        let s = SessionState::create(cfg, ids(100)).unwrap();
        assert_eq!(s.room_count(), 20);
    }

    #[test]
    fn create_rejects_bad_inputs() {
        assert!(matches!(
            SessionState::create(SwarmConfig::default(), vec![]),
            Err(Error::Config(_))
        ));
        let dup = vec![ParticipantId(1), ParticipantId(1)];
        assert!(matches!(
            SessionState::create(SwarmConfig::default(), dup),
            Err(Error::Config(_))
        ));
        let bad = SwarmConfig {
            duration: -1.0,
            ..SwarmConfig::default()
        };
        assert!(SessionState::create(bad, ids(5)).is_err());
    }

    #[test]
    fn posting_rules() {
        let mut s = SessionState::create(SwarmConfig::default(), ids(241)).unwrap();
        let p3 = human_in(&s, RoomId(3));
        assert_eq!(
            s.post_message(RoomId(3), Author::Human(p3), "hello")
                .unwrap(),
            0
        );
        assert_eq!(
            s.post_message(RoomId(3), Author::Human(p3), "again")
                .unwrap(),
            1
        );

        let p2 = human_in(&s, RoomId(2));
        assert!(matches!(
            s.post_message(RoomId(5), Author::Human(p2), "hi"),
            Err(Error::Unauthorized { .. })
        ));
        assert_eq!(
            s.post_message(RoomId(5), Author::Observer(RoomId(4)), "relay")
                .unwrap(),
            0
        );
        assert!(matches!(
            s.post_message(RoomId(5), Author::Observer(RoomId(7)), "relay"),
            Err(Error::NoSuchEdge { .. })
        ));
        assert!(matches!(
            s.post_message(RoomId(3), Author::Human(p3), "  "),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            s.post_message(RoomId(999), Author::Human(p3), "x"),
            Err(Error::UnknownRoom(_))
        ));
        assert!(matches!(
            s.post_message(RoomId(3), Author::Human(ParticipantId(9999)), "x"),
            Err(Error::Unauthorized { .. })
        ));
    }

    #[test]
    fn windows_are_suffixes() {
        let mut s = SessionState::create(SwarmConfig::default(), ids(10)).unwrap();
        assert!(s.transcript_window(RoomId(0), 0).unwrap().is_empty());
        let p = human_in(&s, RoomId(0));
        for text in ["a", "b", "c"] {
            s.post_message(RoomId(0), Author::Human(p), text).unwrap();
        }
        let w = s.transcript_window(RoomId(0), 2).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].text, "c");
        assert!(s.transcript_window(RoomId(0), 10).unwrap().is_empty());
    }

    #[test]
    fn full_session_event_counts() {
        let mut s = SessionState::create(SwarmConfig::default(), ids(241)).unwrap();
        let rooms = s.room_count();
        let events = s.advance_clock(240.0).unwrap();
        let snaps: Vec<f64> = events
            .iter()
            .filter(|e| matches!(e, DueEvent::SnapshotDue { .. }))
            .map(|e| e.time())
            .collect();
        assert_eq!(snaps, (1..=16).map(|k| 15.0 * k as f64).collect::<Vec<_>>());
        let relays = events
            .iter()
            .filter(|e| matches!(e, DueEvent::RelayDue { .. }))
            .count();
        assert_eq!(relays, 8 * rooms);
        assert!(matches!(events.last(), Some(DueEvent::SessionEnd { t }) if *t == 240.0));
        assert_eq!(s.phase(), Phase::Closed);
        let times: Vec<f64> = events.iter().map(DueEvent::time).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zero_step_is_silent() {
        let mut s = SessionState::create(SwarmConfig::default(), ids(5)).unwrap();
        assert!(s.advance_clock(0.0).unwrap().is_empty());
        assert!(s.advance_clock(-1.0).is_err());
    }

    #[test]
    fn split_advance_matches_single() {
        let mut a = SessionState::create(SwarmConfig::default(), ids(30)).unwrap();
        let mut b = a.clone();
        let mut ea = a.advance_clock(120.0).unwrap();
        ea.extend(a.advance_clock(120.0).unwrap());
        let eb = b.advance_clock(240.0).unwrap();
        assert_eq!(ea, eb);
    }

    #[test]
    fn handlers_can_post_at_the_final_boundary() {
        let mut s = SessionState::create(SwarmConfig::default(), ids(12)).unwrap();
        let mut posted = 0;
        s.advance_clock_with(240.0, |s, ev| {
            if let DueEvent::RelayDue { t, room } = *ev {
                if t == 240.0 {
                    let target = s.topology().targets(room).next().unwrap();
                    s.post_message(target, Author::Observer(room), "late relay")?;
                    posted += 1;
                }
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(posted, s.room_count());
        assert!(s.transcripts().iter().flatten().all(|m| m.t == 240.0));
    }

    #[test]
    fn closed_session_rejects_posts() {
        let mut s = SessionState::create(SwarmConfig::default(), ids(5)).unwrap();
        s.advance_clock(300.0).unwrap();
        assert!(s.advance_clock(10.0).unwrap().is_empty());
        let p = human_in(&s, RoomId(0));
        assert!(matches!(
            s.post_message(RoomId(0), Author::Human(p), "x"),
            Err(Error::SessionClosed)
        ));
    }

    proptest! {
        #[test]
        fn seq_is_gapless_under_interleaving(posts in prop::collection::vec((0usize..30, 0usize..3), 0..200)) {
            let mut s = SessionState::create(SwarmConfig::default(), ids(30)).unwrap();
            for (who, _) in &posts {
                let p = ParticipantId(*who as u64);
                let room = s.room_of(p).unwrap();
                s.post_message(room, Author::Human(p), "msg").unwrap();
            }
            for t in s.transcripts() {
                for (i, m) in t.iter().enumerate() {
                    prop_assert_eq!(m.seq, i as u64);
                }
            }
        }

        #[test]
        fn schedule_is_a_function_of_the_step_sequence(steps in prop::collection::vec(0.0f64..50.0, 1..20)) {
            let cfg = SwarmConfig { options: numeric_options(&[1.0, 2.0]), ..SwarmConfig::default() };
            let run = || {
                let mut s = SessionState::create(cfg.clone(), ids(11)).unwrap();
                let mut log = Vec::new();
                for dt in &steps {
                    log.extend(s.advance_clock(*dt).unwrap());
                }
                serde_json::to_string(&log).unwrap()
            };
            prop_assert_eq!(run(), run());
        }

        #[test]
        fn no_mutation_after_close(texts in prop::collection::vec("[a-z ]{0,12}", 1..20)) {
            let mut s = SessionState::create(SwarmConfig::default(), ids(12)).unwrap();
            let p = human_in(&s, RoomId(1));
            s.post_message(RoomId(1), Author::Human(p), "before").unwrap();
            s.advance_clock(240.0).unwrap();
            let before = s.transcripts().to_vec();
            for t in &texts {
                prop_assert!(s.post_message(RoomId(1), Author::Human(p), t).is_err());
                prop_assert!(s.post_message(RoomId(2), Author::Observer(RoomId(1)), t).is_err());
            }
            prop_assert_eq!(s.transcripts(), before.as_slice());
        }
    }
}
