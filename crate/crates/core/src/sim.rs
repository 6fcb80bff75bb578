//! Desk-scale experiment driver. Synthetic agents stand in for people: each
//! replication runs a survey arm and a full conversational session on the
//! same beliefs, under simulated time.
//!
//! All randomness derives from the spec seed; rerunning a spec reproduces
//! every transcript byte for byte.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::config::SwarmConfig;
use crate::counting::Matcher;
use crate::deliberation::Deliberation;
use crate::error::{Error, Result};
use crate::options::{nearest_option, AnswerOption, OptionId};
use crate::persist::{render_transcript, write_atomic};
use crate::sentiment::{series_records, SentimentSnapshot};
use crate::session::{Author, Message, ParticipantId, Phase, RoomId, SessionState};
use crate::stats::{mean, population_sd, sample_sd};
use crate::survey::{error_report, ErrorReport, SurveyResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    #[default]
    Independent,
    Conformist,
}

/// One synthetic participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentModel {
    pub kind: AgentKind,
    pub belief: f64,
    pub talkativeness: f64,
    pub conform_rate: f64,
}

impl AgentModel {
    /// Pulls the belief toward `target` when conformist.
    pub fn conform(&mut self, target: f64) {
        if self.kind == AgentKind::Conformist {
            self.belief = (1.0 - self.conform_rate) * self.belief + self.conform_rate * target;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    Survey,
    Csi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub config: SwarmConfig,
    pub agents: usize,
    /// Beliefs are log-normal with this median and log-scale sigma.
    pub belief_median: f64,
    pub belief_sigma: f64,
    pub model: AgentKind,
    pub conform_rate: f64,
    pub talkativeness: f64,
    /// How far back (seconds) a conformist looks in its room.
    pub influence_window: f64,
    pub truth: f64,
    pub arms: BTreeSet<Arm>,
    pub replications: usize,
    pub tick: f64,
    pub seed: u64,
}

impl ExperimentSpec {
    /// Default population and dynamics around a given true value.
    pub fn new(truth: f64) -> Self {
        Self {
            config: SwarmConfig::default(),
            agents: 241,
            belief_median: 500.0,
            belief_sigma: 0.5,
            model: AgentKind::Conformist,
            conform_rate: 0.5,
            talkativeness: 0.02,
            influence_window: 30.0,
            truth,
            arms: BTreeSet::from([Arm::Survey, Arm::Csi]),
            replications: 1,
            tick: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let cfg = |m: &str| Err(Error::Config(m.to_owned()));
        if self.agents == 0 {
            return cfg("agent count must be at least 1");
        }
        if self.replications == 0 {
            return cfg("replications must be at least 1");
        }
        if !(self.belief_median.is_finite() && self.belief_median > 0.0) {
            return cfg("belief median must be positive");
        }
        if !(self.belief_sigma.is_finite() && self.belief_sigma > 0.0) {
            return cfg("belief sigma must be positive");
        }
        if !(0.0..=1.0).contains(&self.talkativeness) {
            return cfg("talkativeness must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.conform_rate) {
            return cfg("conform rate must lie in [0, 1]");
        }
        if !(self.influence_window.is_finite() && self.influence_window > 0.0) {
            return cfg("influence window must be positive");
        }
        if !(self.truth.is_finite() && self.truth > 0.0) {
            return cfg("truth must be positive");
        }
        if self.arms.is_empty() {
            return cfg("at least one arm must run");
        }
        if !(self.tick.is_finite() && self.tick > 0.0 && self.tick <= self.config.duration) {
            return cfg("tick must lie in (0, duration]");
        }
        Ok(())
    }
}

/// Independent generator for one purpose within one replication.
fn stream(seed: u64, replication: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((replication as u64) << 8) | purpose);
    rng
}

const BELIEFS: u64 = 1;
const PARTITION: u64 = 2;
const CHATTER: u64 = 3;

const REASONS: [&str; 6] = [
    "the jar looks tall",
    "they are packed tight",
    "the gumballs look small",
    "there is space at the top",
    "the jar is wide at the base",
    "I counted one layer and multiplied",
];

fn chat_line(rng: &mut ChaCha8Rng, label: &str) -> String {
    let reason = REASONS[rng.random_range(0..REASONS.len())];
    match rng.random_range(0..4) {
        0 => format!("I think {label} because {reason}"),
        1 => format!("{label} seems right to me"),
        2 => format!("My guess is {label}, since {reason}"),
        _ => format!("I'd go with {label}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyArm {
    pub woc_estimate: f64,
    pub mae_individuals: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiArm {
    pub estimate: f64,
    pub abs_error: f64,
    pub winning_option: OptionId,
    pub snapshots: usize,
    pub relay_rounds: usize,
    pub messages: usize,
}

/// One line of `report.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub replication: usize,
    pub rooms: usize,
    pub survey: Option<SurveyArm>,
    pub csi: Option<CsiArm>,
    /// Present when both arms ran.
    pub error_report: Option<ErrorReport>,
    /// Room dispersion at each relay round (see [`convergence_curve`]).
    pub dispersion: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRun {
    pub report: ReplicationReport,
    pub series: Vec<SentimentSnapshot>,
    pub transcripts: Vec<Vec<Message>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: String,
    pub mean_abs_error: f64,
    pub sd_abs_error: Option<f64>,
    pub mean_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub runs: Vec<ReplicationRun>,
    pub aggregate: Vec<MethodAggregate>,
}

pub fn sample_agents(spec: &ExperimentSpec, replication: usize) -> Result<Vec<AgentModel>> {
    let dist = LogNormal::new(spec.belief_median.ln(), spec.belief_sigma)
        .map_err(|e| Error::Config(format!("belief distribution: {e}")))?;
    let mut rng = stream(spec.seed, replication, BELIEFS);
    Ok((0..spec.agents)
        .map(|_| AgentModel {
            kind: spec.model,
            belief: dist.sample(&mut rng),
            talkativeness: spec.talkativeness,
            conform_rate: spec.conform_rate,
        })
        .collect())
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let runs = (0..spec.replications)
        .map(|r| run_replication(spec, r))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&runs, spec.truth);
    Ok(ExperimentReport {
        spec: spec.clone(),
        runs,
        aggregate,
    })
}

pub fn run_replication(spec: &ExperimentSpec, replication: usize) -> Result<ReplicationRun> {
    let options = &spec.config.options;
    let agents = sample_agents(spec, replication)?;

    let survey = spec.arms.contains(&Arm::Survey).then(|| {
        let mut sr = SurveyResult::new(options.clone());
        for (i, a) in agents.iter().enumerate() {
            sr.respond(ParticipantId(i as u64), nearest_option(options, a.belief))
                .expect("fresh participant, valid option");
        }
        sr
    });

    let mut config = spec.config.clone();
    config.seed = stream(spec.seed, replication, PARTITION).next_u64();
    let participants: Vec<ParticipantId> = (0..agents.len() as u64).map(ParticipantId).collect();
    let rooms = crate::topology::group_sizes(agents.len(), config.min_size, config.max_size).len();

    let mut series = Vec::new();
    let mut transcripts = vec![Vec::new(); rooms];
    let mut csi = None;
    let mut dispersion = Vec::new();
    let mut result = None;
    if spec.arms.contains(&Arm::Csi) {
        let session = SessionState::create(config, participants)?;
        let mut delib = Deliberation::new(session);
        run_session(spec, &mut delib, agents, replication)?;
        let dr = delib.result()?;
        let s = delib.session();
        let relay_rounds = delib
            .event_log()
            .iter()
            .filter(|e| matches!(e, crate::DueEvent::RelayDue { room, .. } if room.0 == 0))
            .count();
        dispersion = convergence_curve(
            s.transcripts(),
            options,
            s.config().relay_interval,
            s.config().relay_rounds(),
        );
        csi = Some(CsiArm {
            estimate: dr.final_estimate,
            abs_error: (dr.final_estimate - spec.truth).abs(),
            winning_option: dr.winning_option,
            snapshots: dr.series.len(),
            relay_rounds,
            messages: s.transcripts().iter().map(Vec::len).sum(),
        });
        series = dr.series.clone();
        transcripts = s.transcripts().to_vec();
        result = Some(dr);
    }

    let survey_arm = match &survey {
        Some(sr) => Some(SurveyArm {
            woc_estimate: crate::survey::woc_mean(sr)?,
            mae_individuals: crate::survey::mae_individuals(sr, spec.truth)?,
        }),
        None => None,
    };
    let error_report = match (&survey, &result) {
        (Some(sr), Some(dr)) => Some(error_report(spec.truth, sr, dr)?),
        _ => None,
    };
    Ok(ReplicationRun {
        report: ReplicationReport {
            replication,
            rooms,
            survey: survey_arm,
            csi,
            error_report,
            dispersion,
        },
        series,
        transcripts,
    })
}

/// Recent option values mentioned in one room.
#[derive(Default)]
struct RoomMemory {
    cursor: usize,
    mentions: Vec<(f64, f64)>,
}

fn run_session(
    spec: &ExperimentSpec,
    delib: &mut Deliberation,
    mut agents: Vec<AgentModel>,
    replication: usize,
) -> Result<()> {
    let options: Vec<AnswerOption> = delib.session().config().options.clone();
    let matcher = Matcher::new(&options);
    let mut rng = stream(spec.seed, replication, CHATTER);
    let rooms: Vec<RoomId> = (0..agents.len())
        .map(|i| delib.session().room_of(ParticipantId(i as u64)).unwrap())
        .collect();
    let mut memory: Vec<RoomMemory> = (0..delib.session().room_count())
        .map(|_| RoomMemory::default())
        .collect();

    while delib.session().phase() == Phase::Open {
        let now = delib.session().clock();
        for (i, agent) in agents.iter().enumerate() {
            if rng.random::<f64>() < agent.talkativeness {
                let label = &options[nearest_option(&options, agent.belief).index()].label;
                let text = chat_line(&mut rng, label);
                delib.session_mut().post_message(
                    rooms[i],
                    Author::Human(ParticipantId(i as u64)),
                    &text,
                )?;
            }
        }
        if spec.model == AgentKind::Conformist && spec.conform_rate > 0.0 {
            let session = delib.session();
            let mut targets = Vec::with_capacity(memory.len());
            for (room, mem) in memory.iter_mut().enumerate() {
                let transcript = session.transcript(RoomId(room as u32))?;
                for m in &transcript[mem.cursor..] {
                    for id in matcher.supported(&m.text) {
                        mem.mentions.push((m.t, options[id.index()].value));
                    }
                }
                mem.cursor = transcript.len();
                let recent: Vec<f64> = mem
                    .mentions
                    .iter()
                    .rev()
                    .take_while(|(t, _)| *t > now - spec.influence_window)
                    .map(|(_, v)| *v)
                    .collect();
                targets.push(mean(&recent));
            }
            for (i, agent) in agents.iter_mut().enumerate() {
                if let Some(target) = targets[rooms[i].index()] {
                    agent.conform(target);
                }
            }
        }
        delib.advance(spec.tick)?;
    }
    Ok(())
}

/// Spread of room opinions at each relay round: for round `k` every room's
/// leading option is taken from its human mentions in
/// `[(k-1)·interval, k·interval)`, and the population standard deviation of
/// those options' values across rooms is reported. Rooms with no mentions in
/// a round are left out; a single contributing room gives 0.
pub fn convergence_curve(
    transcripts: &[Vec<Message>],
    options: &[AnswerOption],
    relay_interval: f64,
    rounds: usize,
) -> Vec<f64> {
    let matcher = Matcher::new(options);
    let supported: Vec<Vec<(f64, Vec<OptionId>)>> = transcripts
        .iter()
        .map(|t| {
            t.iter()
                .filter(|m| m.author.is_human())
                .map(|m| (m.t, matcher.supported(&m.text)))
                .collect()
        })
        .collect();
    (1..=rounds)
        .map(|k| {
            let (lo, hi) = ((k - 1) as f64 * relay_interval, k as f64 * relay_interval);
            let tops: Vec<f64> = supported
                .iter()
                .filter_map(|room| {
                    let mut counts = vec![0usize; options.len()];
                    for (t, ids) in room {
                        if *t >= lo && *t < hi {
                            ids.iter().for_each(|id| counts[id.index()] += 1);
                        }
                    }
                    let (best, n) = counts.iter().enumerate().fold((0, 0), |acc, (i, &c)| {
                        if c > acc.1 {
                            (i, c)
                        } else {
                            acc
                        }
                    });
                    (n > 0).then(|| options[best].value)
                })
                .collect();
            population_sd(&tops).unwrap_or(0.0)
        })
        .collect()
}

fn aggregate(runs: &[ReplicationRun], truth: f64) -> Vec<MethodAggregate> {
    let mut rows: Vec<(&str, Vec<f64>)> = Vec::new();
    let surveys: Vec<&SurveyArm> = runs
        .iter()
        .filter_map(|r| r.report.survey.as_ref())
        .collect();
    if !surveys.is_empty() {
        rows.push((
            "Individuals (mean abs. error)",
            surveys.iter().map(|s| s.mae_individuals).collect(),
        ));
        rows.push((
            "Survey mean (WoC)",
            surveys
                .iter()
                .map(|s| (s.woc_estimate - truth).abs())
                .collect(),
        ));
    }
    let csis: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.report.csi.as_ref())
        .map(|c| c.abs_error)
        .collect();
    if !csis.is_empty() {
        rows.push(("Conversational swarm", csis));
    }
    rows.into_iter()
        .map(|(method, errs)| {
            let m = mean(&errs).unwrap();
            MethodAggregate {
                method: method.to_owned(),
                mean_abs_error: m,
                sd_abs_error: sample_sd(&errs),
                mean_pct: m / truth,
            }
        })
        .collect()
}

impl ExperimentReport {
    pub fn report_lines(&self) -> String {
        jsonl(self.runs.iter().map(|r| &r.report))
    }

    pub fn series_lines(&self) -> String {
        let multi = self.runs.len() > 1;
        jsonl(
            self.runs
                .iter()
                .flat_map(|r| series_records(&r.series, multi.then_some(r.report.replication)))
                .collect::<Vec<_>>()
                .iter(),
        )
    }

    /// Plain-text comparison table plus the model-level convergence summary.
    pub fn summary(&self) -> String {
        let spec = &self.spec;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Simulated deliberation: {} agents, {} replication(s), seed {}",
            spec.agents, spec.replications, spec.seed
        );
        let _ = writeln!(out, "truth = {}\n", spec.truth);
        let _ = writeln!(
            out,
            "{:<32} {:>14} {:>10} {:>8}",
            "method", "mean abs. err", "sd", "error"
        );
        for a in &self.aggregate {
            let sd = a
                .sd_abs_error
                .map_or_else(|| "-".to_owned(), |s| format!("{s:.2}"));
            let _ = writeln!(
                out,
                "{:<32} {:>14.2} {:>10} {:>7.1}%",
                a.method,
                a.mean_abs_error,
                sd,
                a.mean_pct * 100.0
            );
        }
        let curves: Vec<&Vec<f64>> = self
            .runs
            .iter()
            .map(|r| &r.report.dispersion)
            .filter(|d| !d.is_empty())
            .collect();
        if !curves.is_empty() {
            let _ = writeln!(out, "\nModel-level convergence (a property of the simulated agent model, not of people):");
            let decreased = curves.iter().filter(|c| c.last() < c.first()).count();
            let _ = writeln!(out, "  final-round room dispersion below first-round in {decreased} of {} replication(s)", curves.len());
            let rounds = curves[0].len();
            let per_round: Vec<String> = (0..rounds)
                .map(|k| {
                    format!(
                        "{:.1}",
                        mean(&curves.iter().map(|c| c[k]).collect::<Vec<_>>()).unwrap()
                    )
                })
                .collect();
            let _ = writeln!(
                out,
                "  mean dispersion by relay round: {}",
                per_round.join(" ")
            );
        }
        out
    }

    /// Writes `report.jsonl`, `summary.txt`, one `transcript-<rep>-<room>.jsonl`
    /// per room and replication, and `series.jsonl` when asked.
    pub fn write_outputs(&self, dir: &Path, series: bool) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("report.jsonl"), self.report_lines().as_bytes())?;
        if series {
            write_atomic(&dir.join("series.jsonl"), self.series_lines().as_bytes())?;
        }
        write_atomic(&dir.join("summary.txt"), self.summary().as_bytes())?;
        for run in &self.runs {
            for (room, t) in run.transcripts.iter().enumerate() {
                let path = dir.join(format!(
                    "transcript-{}-{room}.jsonl",
                    run.report.replication
                ));
                write_atomic(&path, render_transcript(t).as_bytes())?;
            }
        }
        Ok(())
    }
}

fn jsonl<'a, T: Serialize + 'a>(items: impl Iterator<Item = &'a T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Reads a `report.jsonl` back.
pub fn parse_report_lines(text: &str) -> Result<Vec<ReplicationReport>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: n + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::options::numeric_options;

    fn small(seed: u64) -> ExperimentSpec {
        ExperimentSpec {
            agents: 20,
            seed,
            ..ExperimentSpec::new(659.0)
        }
    }

    #[test]
    fn spec_validation() {
        small(0).validate().unwrap();
        for bad in [
            ExperimentSpec {
                agents: 0,
                ..small(0)
            },
            ExperimentSpec {
                replications: 0,
                ..small(0)
            },
            ExperimentSpec {
                belief_sigma: 0.0,
                ..small(0)
            },
            ExperimentSpec {
                talkativeness: 1.5,
                ..small(0)
            },
            ExperimentSpec {
                conform_rate: -0.1,
                ..small(0)
            },
            ExperimentSpec {
                arms: BTreeSet::new(),
                ..small(0)
            },
            ExperimentSpec {
                tick: 0.0,
                ..small(0)
            },
        ] {
            assert!(matches!(run_experiment(&bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn unanimous_truth_has_zero_error() {
        let spec = ExperimentSpec {
            agents: 30,
            belief_median: 659.0,
            belief_sigma: 1e-9,
            model: AgentKind::Independent,
            truth: 659.0,
            config: SwarmConfig {
                options: numeric_options(&[300.0, 659.0, 900.0]),
                ..SwarmConfig::default()
            },
            ..small(4)
        };
        let report = run_experiment(&spec).unwrap();
        let er = report.runs[0].report.error_report.as_ref().unwrap();
        assert_eq!(er.woc_abs_error, 0.0);
        assert_eq!(er.csi_abs_error, 0.0);
        assert_eq!(er.mae_individuals, 0.0);
        assert_eq!(er.z, None);
    }

    #[test]
    fn arms_are_paired_on_beliefs() {
        let a = sample_agents(&small(8), 0).unwrap();
        let b = sample_agents(&small(8), 0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_agents(&small(8), 1).unwrap());
    }

    #[test]
    fn single_arms_run_alone() {
        let survey_only = ExperimentSpec {
            arms: BTreeSet::from([Arm::Survey]),
            ..small(1)
        };
        let r = run_experiment(&survey_only).unwrap();
        assert!(r.runs[0].report.csi.is_none() && r.runs[0].report.error_report.is_none());
        assert!(r.runs[0].report.survey.is_some());
        let csi_only = ExperimentSpec {
            arms: BTreeSet::from([Arm::Csi]),
            ..small(1)
        };
        let r = run_experiment(&csi_only).unwrap();
        assert_eq!(r.runs[0].report.csi.as_ref().unwrap().snapshots, 16);
    }

    #[test]
    fn single_room_never_disperses() {
        let spec = ExperimentSpec {
            agents: 4,
            ..small(2)
        };
        let r = run_experiment(&spec).unwrap();
        assert_eq!(r.runs[0].report.rooms, 1);
        assert!(r.runs[0].report.dispersion.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn report_lines_parse_back() {
        let r = run_experiment(&ExperimentSpec {
            replications: 2,
            ..small(5)
        })
        .unwrap();
        let parsed = parse_report_lines(&r.report_lines()).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[1], r.runs[1].report);
        assert!(r.summary().contains("Conversational swarm"));
    }
}
