//! Drives one session: clock events trigger sentiment snapshots and observer
//! relay rounds.

use crate::error::Result;
use crate::relay::{Distillation, Distiller, MockDistiller, RelayAgents, RelayJob};
use crate::sentiment::{
    finalize_with, DeliberationResult, FinalRule, MockScorer, Scorer, SentimentSnapshot,
    SentimentTracker,
};
use crate::session::{DueEvent, SessionState};

pub struct Deliberation {
    session: SessionState,
    relays: RelayAgents,
    sentiment: SentimentTracker,
    distiller: Box<dyn Distiller + Send + Sync>,
    scorer: Box<dyn Scorer + Send + Sync>,
    final_rule: FinalRule,
    log: Vec<DueEvent>,
}

impl Deliberation {
    pub fn new(session: SessionState) -> Self {
        Self::with_backends(session, Box::new(MockDistiller), Box::new(MockScorer))
    }

    pub fn with_backends(
        session: SessionState,
        distiller: Box<dyn Distiller + Send + Sync>,
        scorer: Box<dyn Scorer + Send + Sync>,
    ) -> Self {
        let rooms = session.room_count();
        Self {
            session,
            relays: RelayAgents::new(rooms),
            sentiment: SentimentTracker::new(rooms),
            distiller,
            scorer,
            final_rule: FinalRule::default(),
            log: Vec::new(),
        }
    }

    pub fn set_final_rule(&mut self, rule: FinalRule) {
        self.final_rule = rule;
    }

    pub fn session(&self) -> &SessionState {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut SessionState {
        &mut self.session
    }

    pub fn series(&self) -> &[SentimentSnapshot] {
        self.sentiment.series()
    }

    pub fn event_log(&self) -> &[DueEvent] {
        &self.log
    }

    pub fn relays(&self) -> &RelayAgents {
        &self.relays
    }

    /// Advances the clock, running snapshots and relay rounds inline with the
    /// configured distiller.
    pub fn advance(&mut self, dt: f64) -> Result<Vec<DueEvent>> {
        let Self {
            session,
            relays,
            sentiment,
            distiller,
            scorer,
            log,
            ..
        } = self;
        let mut round: Vec<Option<RelayJob>> = Vec::new();
        let events = session.advance_clock_with(dt, |s, ev| {
            match *ev {
                DueEvent::SnapshotDue { t } => {
                    sentiment.take_snapshot(s, t, scorer.as_ref());
                }
                DueEvent::RelayDue { room, .. } => {
                    if room.index() == 0 {
                        round = capture(relays, s)?;
                    }
                    if let Some(job) = round[room.index()].take() {
                        match distiller.distill(&job.window, &s.config().options) {
                            Ok(d) => {
                                RelayAgents::apply(s, &job, &d)?;
                            }
                            Err(e) => tracing::warn!(source = %job.source, "relay skipped: {e}"),
                        }
                    }
                }
                DueEvent::SessionEnd { .. } => {}
            }
            Ok(())
        })?;
        log.extend_from_slice(&events);
        Ok(events)
    }

    /// Advances the clock but hands relay windows back instead of distilling
    /// them, so a slow distiller can run without holding the session. Apply
    /// results with [`apply_relay`](Self::apply_relay).
    pub fn advance_deferred(&mut self, dt: f64) -> Result<(Vec<DueEvent>, Vec<RelayJob>)> {
        let Self {
            session,
            relays,
            sentiment,
            scorer,
            log,
            ..
        } = self;
        let mut jobs = Vec::new();
        let events = session.advance_clock_with(dt, |s, ev| {
            match *ev {
                DueEvent::SnapshotDue { t } => {
                    sentiment.take_snapshot(s, t, scorer.as_ref());
                }
                DueEvent::RelayDue { room, .. } if room.index() == 0 => {
                    jobs.extend(relays.capture_round(s)?);
                }
                _ => {}
            }
            Ok(())
        })?;
        log.extend_from_slice(&events);
        Ok((events, jobs))
    }

    pub fn apply_relay(&mut self, job: &RelayJob, d: &Distillation) -> Result<Option<u64>> {
        RelayAgents::apply(&mut self.session, job, d)
    }

    pub fn distiller(&self) -> &(dyn Distiller + Send + Sync) {
        self.distiller.as_ref()
    }

    pub fn result(&self) -> Result<DeliberationResult> {
        finalize_with(
            self.sentiment.series().to_vec(),
            &self.session.config().options,
            self.final_rule,
        )
    }
}

fn capture(relays: &mut RelayAgents, s: &SessionState) -> Result<Vec<Option<RelayJob>>> {
    let mut slots: Vec<Option<RelayJob>> = vec![None; s.room_count()];
    for job in relays.capture_round(s)? {
        let i = job.source.index();
        slots[i] = Some(job);
    }
    Ok(slots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SwarmConfig;
    use crate::options::numeric_options;
    use crate::session::{Author, ParticipantId, RoomId};

    fn setup(n: u64) -> Deliberation {
        let cfg = SwarmConfig {
            options: numeric_options(&[500.0, 720.0, 1000.0]),
            ..SwarmConfig::default()
        };
        Deliberation::new(SessionState::create(cfg, (0..n).map(ParticipantId).collect()).unwrap())
    }

    #[test]
    fn full_run_produces_sixteen_normalized_snapshots() {
        let mut d = setup(30);
        for tick in 0..240 {
            if tick % 7 == 0 {
                let p = d.session().members(RoomId(0))[0];
                d.session_mut()
                    .post_message(RoomId(0), Author::Human(p), "720 because it is tall")
                    .unwrap();
            }
            d.advance(1.0).unwrap();
        }
        let series = d.series();
        assert_eq!(series.len(), 16);
        for (k, s) in series.iter().enumerate() {
            assert_eq!(s.t, 15.0 * (k + 1) as f64);
            assert!(s.is_normalized());
        }
        let r = d.result().unwrap();
        assert_eq!(r.final_estimate, 720.0);
        assert!(
            (r.final_estimate
                - crate::sentiment::weighted_estimate(
                    &r.series[15],
                    &d.session().config().options
                ))
            .abs()
                < 1e-12
        );
        // Observer posts land one room further each round.
        for room in 1..=5 {
            assert!(d
                .session()
                .transcript(RoomId(room))
                .unwrap()
                .iter()
                .any(|m| m.text.contains("720")));
        }
    }

    #[test]
    fn deferred_relay_defers_posts() {
        let mut d = setup(30);
        let p = d.session().members(RoomId(0))[0];
        d.session_mut()
            .post_message(RoomId(0), Author::Human(p), "500")
            .unwrap();
        let (_, jobs) = d.advance_deferred(30.0).unwrap();
        assert_eq!(jobs.len(), d.session().room_count());
        assert!(d.session().transcript(RoomId(1)).unwrap().is_empty());
        let job = jobs.iter().find(|j| j.source == RoomId(0)).unwrap();
        let dist = d
            .distiller()
            .distill(&job.window, &d.session().config().options)
            .unwrap();
        assert_eq!(d.apply_relay(job, &dist).unwrap(), Some(0));
    }
}
