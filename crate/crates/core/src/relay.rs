//! Observer agents: distill a room's recent dialog and re-voice it, in first
//! person, in the neighbouring room.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::counting::Tally;
use crate::error::{Error, Result};
use crate::options::{AnswerOption, OptionId};
use crate::session::{Author, Message, RoomId, SessionState};

/// What an observer took away from a window of dialog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distillation {
    /// Options with positive support, strongest first (lower id on ties).
    pub top_options: Vec<(OptionId, f64)>,
    pub rationales: BTreeMap<OptionId, Vec<String>>,
    pub empty: bool,
}

impl Distillation {
    pub fn empty() -> Self {
        Self {
            top_options: Vec::new(),
            rationales: BTreeMap::new(),
            empty: true,
        }
    }

    /// Builds from per-option weights, dropping non-positive entries.
    pub fn from_weights(
        weights: &[(OptionId, f64)],
        mut rationales: BTreeMap<OptionId, Vec<String>>,
    ) -> Self {
        let mut top: Vec<(OptionId, f64)> =
            weights.iter().copied().filter(|(_, w)| *w > 0.0).collect();
        top.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        rationales.retain(|id, r| !r.is_empty() && top.iter().any(|(t, _)| t == id));
        Self {
            empty: top.is_empty(),
            top_options: top,
            rationales,
        }
    }
}

/// Counting-rule distillation. Observer-authored messages are ignored unless
/// the window has no human messages at all, so content can cross silent
/// rooms.
pub fn distill_mock(window: &[Message], options: &[AnswerOption]) -> Distillation {
    let has_human = window.iter().any(|m| m.author.is_human());
    let mut tally = Tally::new(options);
    for m in window.iter().filter(|m| m.author.is_human() == has_human) {
        tally.add(&m.text);
    }
    let weights: Vec<(OptionId, f64)> = options.iter().map(|o| o.id).zip(tally.weights()).collect();
    let rationales = options
        .iter()
        .map(|o| (o.id, tally.rationales(o.id)))
        .collect();
    Distillation::from_weights(&weights, rationales)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DistillFailure {
    /// Backend could not be reached or timed out; the relay is skipped.
    Unavailable(String),
}

impl fmt::Display for DistillFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistillFailure::Unavailable(why) => write!(f, "distiller unavailable: {why}"),
        }
    }
}

pub trait Distiller {
    fn distill(
        &self,
        window: &[Message],
        options: &[AnswerOption],
    ) -> Result<Distillation, DistillFailure>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockDistiller;

impl Distiller for MockDistiller {
    fn distill(
        &self,
        window: &[Message],
        options: &[AnswerOption],
    ) -> Result<Distillation, DistillFailure> {
        Ok(distill_mock(window, options))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistillerKind {
    #[default]
    Mock,
    ExternalLlm,
}

/// Which distiller backs the observers, plus its parameters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillerBinding {
    pub kind: DistillerKind,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

pub const DEFAULT_LLM_TIMEOUT: Duration = Duration::from_secs(10);

impl DistillerBinding {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn external(endpoint: &str, model: &str, timeout: Duration) -> Self {
        let parameters = BTreeMap::from([
            ("endpoint".to_owned(), endpoint.to_owned()),
            ("model".to_owned(), model.to_owned()),
            ("timeout".to_owned(), timeout.as_secs_f64().to_string()),
        ]);
        Self {
            kind: DistillerKind::ExternalLlm,
            parameters,
        }
    }

    /// Reads `CSI_LLM_ENDPOINT`, `CSI_LLM_MODEL`, `CSI_LLM_TIMEOUT` (seconds)
    /// and `CSI_LLM_API_KEY`. Without an endpoint the binding is the mock.
    pub fn from_env() -> Result<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let Some(endpoint) = get("CSI_LLM_ENDPOINT") else {
            return Ok(Self::mock());
        };
        let mut parameters = BTreeMap::from([("endpoint".to_owned(), endpoint)]);
        parameters.insert(
            "timeout".to_owned(),
            get("CSI_LLM_TIMEOUT").unwrap_or_else(|| DEFAULT_LLM_TIMEOUT.as_secs_f64().to_string()),
        );
        if let Some(model) = get("CSI_LLM_MODEL") {
            parameters.insert("model".to_owned(), model);
        }
        if let Some(key) = get("CSI_LLM_API_KEY") {
            parameters.insert("api_key".to_owned(), key);
        }
        let binding = Self {
            kind: DistillerKind::ExternalLlm,
            parameters,
        };
        binding.validate()?;
        Ok(binding)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == DistillerKind::ExternalLlm {
            if self
                .parameters
                .get("endpoint")
                .is_none_or(|e| e.trim().is_empty())
            {
                return Err(Error::Config("external distiller needs an endpoint".into()));
            }
            self.timeout()?;
        }
        Ok(())
    }

    pub fn timeout(&self) -> Result<Duration> {
        let raw = self
            .parameters
            .get("timeout")
            .ok_or_else(|| Error::Config("external distiller needs a timeout".into()))?;
        raw.parse::<f64>()
            .ok()
            .filter(|s| s.is_finite() && *s > 0.0)
            .map(Duration::from_secs_f64)
            .ok_or_else(|| Error::Config(format!("bad distiller timeout {raw:?}")))
    }
}

fn label(options: &[AnswerOption], id: OptionId) -> &str {
    &options[id.index()].label
}

/// Re-voices a distillation as first-person chat. Names the top option, and
/// the runner-up when there is one, each with its leading rationale.
pub fn render_first_person(d: &Distillation, options: &[AnswerOption]) -> Result<String> {
    if d.empty || d.top_options.is_empty() {
        return Err(Error::Contract("cannot render an empty distillation"));
    }
    let because = |id: OptionId| {
        d.rationales
            .get(&id)
            .and_then(|r| r.first())
            .map(|r| format!(" because {r}"))
            .unwrap_or_default()
    };
    let (top, _) = d.top_options[0];
    let mut text = format!(
        "In my other discussion, most support is for {}{}.",
        label(options, top),
        because(top)
    );
    if let Some(&(second, _)) = d.top_options.get(1) {
        text.push_str(&format!(
            " Some also argued for {}{}.",
            label(options, second),
            because(second)
        ));
    }
    Ok(text)
}

/// A window captured from a source room, waiting to be distilled.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayJob {
    pub source: RoomId,
    pub target: RoomId,
    pub window: Vec<Message>,
}

/// Per-room read cursors of the observer agents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayAgents {
    cursors: Vec<u64>,
}

impl RelayAgents {
    pub fn new(room_count: usize) -> Self {
        Self {
            cursors: vec![0; room_count],
        }
    }

    pub fn cursor(&self, room: RoomId) -> u64 {
        self.cursors[room.index()]
    }

    /// Captures everything `source` said since its last relay and moves the
    /// cursor past it. `None` when the room has no outgoing edge.
    pub fn take_window(
        &mut self,
        session: &SessionState,
        source: RoomId,
    ) -> Result<Option<RelayJob>> {
        let window = session.transcript_window(source, self.cursors[source.index()])?;
        self.cursors[source.index()] = session.transcript(source)?.len() as u64;
        Ok(session
            .topology()
            .targets(source)
            .next()
            .map(|target| RelayJob {
                source,
                target,
                window,
            }))
    }

    /// Posts a finished distillation. Empty distillations post nothing.
    pub fn apply(
        session: &mut SessionState,
        job: &RelayJob,
        d: &Distillation,
    ) -> Result<Option<u64>> {
        if d.empty {
            return Ok(None);
        }
        let text = render_first_person(d, &session.config().options)?;
        session
            .post_message(job.target, Author::Observer(job.source), &text)
            .map(Some)
    }

    /// One observer's full cycle: read window, distill, post.
    pub fn relay_step(
        &mut self,
        session: &mut SessionState,
        source: RoomId,
        distiller: &dyn Distiller,
    ) -> Result<Option<u64>> {
        let Some(job) = self.take_window(session, source)? else {
            return Ok(None);
        };
        Self::finish(session, &job, distiller)
    }

    fn finish(
        session: &mut SessionState,
        job: &RelayJob,
        distiller: &dyn Distiller,
    ) -> Result<Option<u64>> {
        match distiller.distill(&job.window, &session.config().options) {
            Ok(d) => Self::apply(session, job, &d),
            Err(e) => {
                warn!(source = %job.source, "relay skipped: {e}");
                Ok(None)
            }
        }
    }

    /// Every room's observer relays once. All windows are captured before any
    /// post lands, so same-round relays never see each other.
    pub fn relay_round(
        &mut self,
        session: &mut SessionState,
        distiller: &dyn Distiller,
    ) -> Result<Vec<Option<u64>>> {
        let jobs = self.capture_round(session)?;
        jobs.iter()
            .map(|job| Self::finish(session, job, distiller))
            .collect()
    }

    pub fn capture_round(&mut self, session: &SessionState) -> Result<Vec<RelayJob>> {
        let mut jobs = Vec::new();
        for room in 0..session.room_count() {
            jobs.extend(self.take_window(session, RoomId(room as u32))?);
        }
        Ok(jobs)
    }
}

/// Request sent to an external model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub system: String,
    pub window: String,
    pub options: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

const LLM_INSTRUCTIONS: &str =
    "You observe a small group chat deliberating among fixed answer options. \
Report which options the group supports and the strongest reasons given. Reply with JSON only: \
{\"top_options\": [{\"option\": <label>, \"weight\": <non-negative number>}], \
\"rationales\": {<label>: [<reason>, ...]}}. Use labels exactly as listed.";

pub fn llm_request(
    window: &[Message],
    options: &[AnswerOption],
    model: Option<&str>,
) -> LlmRequest {
    let mut text = String::new();
    for m in window {
        let who = match m.author {
            Author::Human(p) => format!("participant {p}"),
            Author::Observer(_) => "observer".to_owned(),
        };
        text.push_str(&format!("[{}] {who}: {}\n", m.seq, m.text));
    }
    LlmRequest {
        system: LLM_INSTRUCTIONS.to_owned(),
        window: text,
        options: options.iter().map(|o| o.label.clone()).collect(),
        model: model.map(str::to_owned),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LlmReply {
    top_options: Vec<LlmRanked>,
    #[serde(default)]
    rationales: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LlmRanked {
    option: serde_json::Value,
    weight: f64,
}

fn resolve_option(options: &[AnswerOption], key: &serde_json::Value) -> Option<OptionId> {
    let by_label = |s: &str| {
        options
            .iter()
            .find(|o| o.label.eq_ignore_ascii_case(s.trim()))
            .map(|o| o.id)
    };
    match key {
        serde_json::Value::String(s) => by_label(s),
        serde_json::Value::Number(n) => {
            let x = n.as_f64()?;
            options
                .iter()
                .find(|o| o.value == x)
                .map(|o| o.id)
                .or_else(|| by_label(&n.to_string()))
        }
        _ => None,
    }
}

/// Parses a model reply into a distillation. Unknown options, negative or
/// non-finite weights, and malformed JSON are all rejected.
pub fn parse_llm_response(text: &str, options: &[AnswerOption]) -> Result<Distillation> {
    let reply: LlmReply = serde_json::from_str(text.trim())?;
    let mut weights: BTreeMap<OptionId, f64> = BTreeMap::new();
    for r in &reply.top_options {
        let id = resolve_option(options, &r.option)
            .ok_or_else(|| Error::Validation(format!("unknown option {}", r.option)))?;
        if !(r.weight.is_finite() && r.weight >= 0.0) {
            return Err(Error::Validation(format!("bad weight {}", r.weight)));
        }
        *weights.entry(id).or_insert(0.0) += r.weight;
    }
    let mut rationales = BTreeMap::new();
    for (key, list) in reply.rationales {
        let id = resolve_option(options, &serde_json::Value::String(key.clone()))
            .ok_or_else(|| Error::Validation(format!("unknown option {key:?}")))?;
        let list: Vec<String> = list
            .into_iter()
            .map(|r| r.trim().to_owned())
            .filter(|r| !r.is_empty())
            .collect();
        rationales.insert(id, list);
    }
    let weights: Vec<(OptionId, f64)> = weights.into_iter().collect();
    Ok(Distillation::from_weights(&weights, rationales))
}

/// Resolves a model reply, falling back to the counting rules when it does
/// not parse.
pub fn distill_from_reply(
    reply: &str,
    window: &[Message],
    options: &[AnswerOption],
) -> Distillation {
    parse_llm_response(reply, options).unwrap_or_else(|e| {
        warn!("unparseable distiller reply, using counting rules: {e}");
        distill_mock(window, options)
    })
}
