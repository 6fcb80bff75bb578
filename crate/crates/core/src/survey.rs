//! Survey baseline and the error arithmetic used to compare it with the
//! conversational estimate.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::options::{AnswerOption, OptionId};
use crate::sentiment::DeliberationResult;
use crate::session::ParticipantId;
use crate::stats::{mean, normal_sf, sample_sd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResult {
    pub responses: BTreeMap<ParticipantId, OptionId>,
    pub options: Vec<AnswerOption>,
}

impl SurveyResult {
    pub fn new(options: Vec<AnswerOption>) -> Self {
        Self {
            responses: BTreeMap::new(),
            options,
        }
    }

    pub fn respond(&mut self, participant: ParticipantId, option: OptionId) -> Result<()> {
        if option.index() >= self.options.len() {
            return Err(Error::Validation(format!("unknown option id {option}")));
        }
        if self.responses.contains_key(&participant) {
            return Err(Error::Validation(format!(
                "participant {participant} already responded"
            )));
        }
        self.responses.insert(participant, option);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Chosen option values in participant order.
    pub fn values(&self) -> Vec<f64> {
        self.responses
            .values()
            .map(|id| self.options[id.index()].value)
            .collect()
    }

    pub fn abs_errors(&self, truth: f64) -> Vec<f64> {
        self.values()
            .into_iter()
            .map(|v| (v - truth).abs())
            .collect()
    }
}

/// Wisdom-of-crowd estimate: the mean chosen value.
pub fn woc_mean(sr: &SurveyResult) -> Result<f64> {
    mean(&sr.values()).ok_or(Error::InsufficientData("survey has no responses"))
}

/// Mean absolute error of the individual responses.
pub fn mae_individuals(sr: &SurveyResult, truth: f64) -> Result<f64> {
    check_truth(truth)?;
    mean(&sr.abs_errors(truth)).ok_or(Error::InsufficientData("survey has no responses"))
}

fn check_truth(truth: f64) -> Result<()> {
    if truth.is_finite() && truth > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "truth must be positive, got {truth}"
        )))
    }
}

/// One-sample, upper-tail z statistic of the individual errors against a
/// single group error: `z = (mean - group) / (sd / sqrt(n))` with the sample
/// standard deviation, and `p = P(Z > z)`.
pub fn one_tailed_z(individual_abs_errors: &[f64], group_abs_error: f64) -> Result<(f64, f64)> {
    let n = individual_abs_errors.len();
    if n < 2 {
        return Err(Error::InsufficientData("z-test needs at least two samples"));
    }
    let first = individual_abs_errors[0];
    let m = mean(individual_abs_errors).unwrap();
    let sd = sample_sd(individual_abs_errors).unwrap();
    if individual_abs_errors.iter().all(|e| *e == first)
        || sd.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
    {
        return Err(Error::DegenerateSample(
            "individual errors have zero variance",
        ));
    }
    let z = (m - group_abs_error) / (sd / (n as f64).sqrt());
    Ok((z, normal_sf(z)))
}

/// An extra estimate shown alongside the three core methods, such as a
/// model's single guess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEstimate {
    pub label: String,
    pub estimate: f64,
    pub abs_error: f64,
    pub pct: f64,
}

impl ReferenceEstimate {
    pub fn new(label: impl Into<String>, estimate: f64, truth: f64) -> Self {
        let abs_error = (estimate - truth).abs();
        Self {
            label: label.into(),
            estimate,
            abs_error,
            pct: abs_error / truth,
        }
    }
}

/// Errors of every method against the true value. Percentages are stored as
/// unrounded fractions of `truth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub truth: f64,
    pub mae_individuals: f64,
    pub mae_pct: f64,
    pub woc_estimate: f64,
    pub woc_abs_error: f64,
    pub woc_pct: f64,
    pub csi_estimate: f64,
    pub csi_abs_error: f64,
    pub csi_pct: f64,
    /// `None` when the individual errors cannot support a z-test (fewer than
    /// two responses or zero spread).
    pub z: Option<f64>,
    pub p_one_tailed: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<ReferenceEstimate>,
}

pub fn error_report(truth: f64, sr: &SurveyResult, dr: &DeliberationResult) -> Result<ErrorReport> {
    error_report_for_estimate(truth, sr, dr.final_estimate)
}

pub fn error_report_for_estimate(
    truth: f64,
    sr: &SurveyResult,
    csi_estimate: f64,
) -> Result<ErrorReport> {
    check_truth(truth)?;
    let mae = mae_individuals(sr, truth)?;
    let woc = woc_mean(sr)?;
    let woc_abs = (woc - truth).abs();
    let csi_abs = (csi_estimate - truth).abs();
    let (z, p) = match one_tailed_z(&sr.abs_errors(truth), csi_abs) {
        Ok((z, p)) => (Some(z), Some(p)),
        Err(Error::InsufficientData(_) | Error::DegenerateSample(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(ErrorReport {
        truth,
        mae_individuals: mae,
        mae_pct: mae / truth,
        woc_estimate: woc,
        woc_abs_error: woc_abs,
        woc_pct: woc_abs / truth,
        csi_estimate,
        csi_abs_error: csi_abs,
        csi_pct: csi_abs / truth,
        z,
        p_one_tailed: p,
        references: Vec::new(),
    })
}

impl ErrorReport {
    pub fn with_reference(mut self, label: impl Into<String>, estimate: f64) -> Self {
        self.references
            .push(ReferenceEstimate::new(label, estimate, self.truth));
        self
    }

    /// `(method, absolute error, fraction of truth)` rows, worst method
    /// first as in a bar comparison.
    pub fn rows(&self) -> Vec<(String, f64, f64)> {
        let mut rows = vec![(
            "Individuals (mean abs. error)".to_owned(),
            self.mae_individuals,
            self.mae_pct,
        )];
        rows.extend(
            self.references
                .iter()
                .map(|r| (r.label.clone(), r.abs_error, r.pct)),
        );
        rows.push((
            "Survey mean (WoC)".to_owned(),
            self.woc_abs_error,
            self.woc_pct,
        ));
        rows.push((
            "Conversational swarm".to_owned(),
            self.csi_abs_error,
            self.csi_pct,
        ));
        rows
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("truth = {}\n", fmt_num(self.truth));
        let _ = writeln!(out, "{:<32} {:>12} {:>8}", "method", "abs. error", "error");
        for (name, abs, pct) in self.rows() {
            let _ = writeln!(out, "{name:<32} {:>12} {:>7.0}%", fmt_num(abs), pct * 100.0);
        }
        match (self.z, self.p_one_tailed) {
            (Some(z), Some(p)) => {
                let _ = writeln!(
                    out,
                    "one-tailed z (individuals vs swarm) = {z:.3}, p = {p:.3e}"
                );
            }
            _ => out.push_str("one-tailed z: not defined for this sample\n"),
        }
        out
    }
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.2}")
    }
}

/// One line of a survey response file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub participant: ParticipantId,
    pub option_id: OptionId,
}

/// Reads line-delimited `{participant, option_id}` records. Blank lines and
/// `#` comments are skipped; duplicates and unknown options are errors.
pub fn parse_responses(text: &str, options: &[AnswerOption]) -> Result<SurveyResult> {
    let mut sr = SurveyResult::new(options.to_vec());
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |reason: String| Error::Parse {
            line: n + 1,
            reason,
        };
        let rec: ResponseRecord = serde_json::from_str(line).map_err(|e| parse(e.to_string()))?;
        sr.respond(rec.participant, rec.option_id)
            .map_err(|e| parse(e.to_string()))?;
    }
    Ok(sr)
}
