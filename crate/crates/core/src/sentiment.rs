//! Session-wide conversational sentiment over the answer options, and the
//! weighted group estimate derived from it.
//!
//! Operators see the series; participant-facing surfaces never carry it.

use serde::{Deserialize, Serialize};

use crate::counting::Tally;
use crate::error::{Error, Result};
use crate::options::{AnswerOption, OptionId};
use crate::session::{Message, SessionState};

pub const SUM_TOLERANCE: f64 = 1e-9;

/// Normalized support per option at one instant; `scores[i]` belongs to
/// option id `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentSnapshot {
    pub t: f64,
    pub scores: Vec<f64>,
}

impl SentimentSnapshot {
    pub fn uniform(t: f64, option_count: usize) -> Self {
        Self {
            t,
            scores: vec![1.0 / option_count as f64; option_count],
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.scores.iter().all(|w| *w >= 0.0 && w.is_finite())
            && (self.scores.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE
    }

    /// Highest-weight option, lowest id on ties.
    pub fn leader(&self) -> OptionId {
        let mut best = 0;
        for (i, w) in self.scores.iter().enumerate() {
            if *w > self.scores[best] {
                best = i;
            }
        }
        OptionId(best as u16)
    }
}

/// Raw support scores for a batch of messages.
pub trait Scorer {
    fn score(&self, messages: &[&Message], options: &[AnswerOption]) -> Vec<f64>;
}

/// Counting-rule scorer over human messages, clipped at zero per option.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockScorer;

impl Scorer for MockScorer {
    fn score(&self, messages: &[&Message], options: &[AnswerOption]) -> Vec<f64> {
        score_window(messages.iter().copied(), options)
    }
}

pub fn score_window<'a>(
    messages: impl IntoIterator<Item = &'a Message>,
    options: &[AnswerOption],
) -> Vec<f64> {
    let mut tally = Tally::new(options);
    for m in messages.into_iter().filter(|m| m.author.is_human()) {
        tally.add(&m.text);
    }
    tally.weights()
}

/// Normalizes `raw`; an all-zero interval carries `previous` forward, or is
/// uniform when there is nothing to carry.
pub fn snapshot(raw: &[f64], previous: Option<&SentimentSnapshot>, t: f64) -> SentimentSnapshot {
    let total: f64 = raw.iter().map(|w| w.max(0.0)).sum();
    if total > 0.0 && total.is_finite() {
        return SentimentSnapshot {
            t,
            scores: raw.iter().map(|w| w.max(0.0) / total).collect(),
        };
    }
    match previous {
        Some(prev) => SentimentSnapshot {
            t,
            scores: prev.scores.clone(),
        },
        None => SentimentSnapshot::uniform(t, raw.len()),
    }
}

/// Sum of weight times option value.
pub fn weighted_estimate(snap: &SentimentSnapshot, options: &[AnswerOption]) -> f64 {
    snap.scores
        .iter()
        .zip(options)
        .map(|(w, o)| w * o.value)
        .sum()
}

/// How the final number is drawn from the series.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum FinalRule {
    #[default]
    LastSnapshot,
    /// Exponentially time-weighted snapshot average with the given half-life
    /// (seconds before the last snapshot).
    TimeDecayed { half_life: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliberationResult {
    pub series: Vec<SentimentSnapshot>,
    pub final_estimate: f64,
    pub winning_option: OptionId,
}

pub fn finalize(
    series: Vec<SentimentSnapshot>,
    options: &[AnswerOption],
) -> Result<DeliberationResult> {
    finalize_with(series, options, FinalRule::LastSnapshot)
}

pub fn finalize_with(
    series: Vec<SentimentSnapshot>,
    options: &[AnswerOption],
    rule: FinalRule,
) -> Result<DeliberationResult> {
    let last = series
        .last()
        .ok_or(Error::Contract("cannot finalize an empty sentiment series"))?;
    if last.scores.len() != options.len() {
        return Err(Error::Contract(
            "snapshot width does not match option count",
        ));
    }
    let final_estimate = match rule {
        FinalRule::LastSnapshot => weighted_estimate(last, options),
        FinalRule::TimeDecayed { half_life } => {
            if !(half_life.is_finite() && half_life > 0.0) {
                return Err(Error::Config("half-life must be positive".into()));
            }
            let (mut num, mut den) = (0.0, 0.0);
            for s in &series {
                let w = 0.5f64.powf((last.t - s.t) / half_life);
                num += w * weighted_estimate(s, options);
                den += w;
            }
            num / den
        }
    };
    let winning_option = last.leader();
    Ok(DeliberationResult {
        series,
        final_estimate,
        winning_option,
    })
}

/// Collects snapshots as a session runs. Each snapshot scores the messages
/// posted since the previous one, across all rooms.
#[derive(Debug, Clone, Default)]
pub struct SentimentTracker {
    cursors: Vec<usize>,
    series: Vec<SentimentSnapshot>,
}

impl SentimentTracker {
    pub fn new(room_count: usize) -> Self {
        Self {
            cursors: vec![0; room_count],
            series: Vec::new(),
        }
    }

    pub fn series(&self) -> &[SentimentSnapshot] {
        &self.series
    }

    pub fn take_snapshot(
        &mut self,
        session: &SessionState,
        t: f64,
        scorer: &dyn Scorer,
    ) -> &SentimentSnapshot {
        let mut batch = Vec::new();
        for (room, transcript) in session.transcripts().iter().enumerate() {
            batch.extend(&transcript[self.cursors[room]..]);
            self.cursors[room] = transcript.len();
        }
        let raw = scorer.score(&batch, &session.config().options);
        let snap = snapshot(&raw, self.series.last(), t);
        self.series.push(snap);
        self.series.last().unwrap()
    }

    pub fn into_series(self) -> Vec<SentimentSnapshot> {
        self.series
    }
}

/// One line of the exported series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub replication: Option<usize>,
    pub t: f64,
    pub option_id: OptionId,
    pub weight: f64,
}

pub fn series_records(
    series: &[SentimentSnapshot],
    replication: Option<usize>,
) -> Vec<SeriesRecord> {
    series
        .iter()
        .flat_map(|s| {
            s.scores.iter().enumerate().map(move |(i, w)| SeriesRecord {
                replication,
                t: s.t,
                option_id: OptionId(i as u16),
                weight: *w,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::options::numeric_options;
    use crate::session::{Author, ParticipantId, RoomId};
    use proptest::prelude::*;

    fn msgs(texts: &[&str]) -> Vec<Message> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Message {
                seq: i as u64,
                room: RoomId(i as u32 % 3),
                author: Author::Human(ParticipantId(i as u64)),
                text: t.to_string(),
                t: 1.0,
            })
            .collect()
    }

    #[test]
    fn window_scores() {
        let o = numeric_options(&[500.0, 720.0]);
        assert_eq!(
            score_window(&msgs(&["720 because tall", "I doubt 720", "500"]), &o),
            vec![1.0, 0.0]
        );
        assert_eq!(score_window(&msgs(&["nothing here"]), &o), vec![0.0, 0.0]);
        assert_eq!(
            score_window(&msgs(&["720", "720!", "yes 720"]), &o),
            vec![0.0, 3.0]
        );
        let mut obs = msgs(&["720"]);
        obs[0].author = Author::Observer(RoomId(1));
        assert_eq!(score_window(&obs, &o), vec![0.0, 0.0]);
    }

    #[test]
    fn snapshot_rules() {
        let s = snapshot(&[3.0, 1.0], None, 15.0);
        assert_eq!(s.scores, vec![0.75, 0.25]);
        let prev = SentimentSnapshot {
            t: 15.0,
            scores: vec![0.6, 0.4],
        };
        assert_eq!(
            snapshot(&[0.0, 0.0], Some(&prev), 30.0).scores,
            vec![0.6, 0.4]
        );
        let u = snapshot(&[0.0; 10], None, 15.0);
        assert!(u.scores.iter().all(|w| (*w - 0.1).abs() < 1e-15));
        assert!(u.is_normalized());
    }

    #[test]
    fn estimates() {
        let o = numeric_options(&[100.0, 200.0, 659.0]);
        let all = SentimentSnapshot {
            t: 0.0,
            scores: vec![0.0, 0.0, 1.0],
        };
        assert_eq!(weighted_estimate(&all, &o), 659.0);
        let half = SentimentSnapshot {
            t: 0.0,
            scores: vec![0.5, 0.5, 0.0],
        };
        assert_eq!(weighted_estimate(&half, &o), 150.0);
    }

    #[test]
    fn finalize_uses_last_snapshot() {
        let o = numeric_options(&[577.0, 800.0]);
        let r = finalize(
            vec![SentimentSnapshot {
                t: 15.0,
                scores: vec![1.0, 0.0],
            }],
            &o,
        )
        .unwrap();
        assert_eq!(r.final_estimate, 577.0);
        assert_eq!(r.winning_option, OptionId(0));
        let series = vec![
            SentimentSnapshot {
                t: 15.0,
                scores: vec![1.0, 0.0],
            },
            SentimentSnapshot {
                t: 30.0,
                scores: vec![0.2, 0.8],
            },
        ];
        let r = finalize(series, &o).unwrap();
        assert_eq!(r.winning_option, OptionId(1));
        assert!((r.final_estimate - (0.2 * 577.0 + 0.8 * 800.0)).abs() < 1e-9);
        assert!(matches!(finalize(vec![], &o), Err(Error::Contract(_))));
    }

    #[test]
    fn ties_pick_lowest_id() {
        let s = SentimentSnapshot {
            t: 0.0,
            scores: vec![0.25, 0.375, 0.375],
        };
        assert_eq!(s.leader(), OptionId(1));
    }

    #[test]
    fn decayed_rule_weights_recent_more() {
        let o = numeric_options(&[100.0, 200.0]);
        let series = vec![
            SentimentSnapshot {
                t: 0.0,
                scores: vec![1.0, 0.0],
            },
            SentimentSnapshot {
                t: 10.0,
                scores: vec![0.0, 1.0],
            },
        ];
        let r = finalize_with(series, &o, FinalRule::TimeDecayed { half_life: 10.0 }).unwrap();
        // weights 0.5 and 1.0
        assert!((r.final_estimate - (0.5 * 100.0 + 200.0) / 1.5).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn snapshot_always_sums_to_one(raw in prop::collection::vec(0.0f64..100.0, 1..12)) {
            let s = snapshot(&raw, None, 1.0);
            prop_assert!(s.is_normalized());
        }

        #[test]
        fn estimate_monotone_in_top_option(
            raw in prop::collection::vec(0.01f64..10.0, 2..10),
            bump in 0.0f64..50.0,
        ) {
            let values: Vec<f64> = (1..=raw.len()).map(|i| 100.0 * i as f64).collect();
            let o = numeric_options(&values);
            let before = weighted_estimate(&snapshot(&raw, None, 0.0), &o);
            let mut raised = raw.clone();
            *raised.last_mut().unwrap() += bump;
            let after = weighted_estimate(&snapshot(&raised, None, 0.0), &o);
            prop_assert!(after >= before - 1e-9);
        }
    }
}
