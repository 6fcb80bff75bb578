//! Answer options and the line-delimited options file.
//!
//! One JSON record per line: `{"id": 0, "label": "150", "value": 150}`.
//! Blank lines and lines starting with `#` are skipped.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OptionId(pub u16);

impl OptionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for OptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerOption {
    pub id: OptionId,
    pub label: String,
    pub value: f64,
}

impl AnswerOption {
    pub fn new(id: u16, label: impl Into<String>, value: f64) -> Self {
        Self {
            id: OptionId(id),
            label: label.into(),
            value,
        }
    }
}

/// Builds an option set whose labels are the values themselves.
pub fn numeric_options(values: &[f64]) -> Vec<AnswerOption> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| AnswerOption::new(i as u16, format_value(v), v))
        .collect()
}

/// Integral values print without a fractional part so they match chat tokens.
pub fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Ten options spanning a plausible range for a jar-count question. Synthetic;
/// not the option set of any real study.
pub fn fixture_options() -> Vec<AnswerOption> {
    parse_options(include_str!("../data/options-fixture.jsonl"))
        .expect("bundled options fixture is valid")
}

pub fn validate_options(options: &[AnswerOption]) -> Result<()> {
    if options.is_empty() {
        return Err(Error::Config("option set is empty".into()));
    }
    if options.len() > u16::MAX as usize {
        return Err(Error::Config("too many options".into()));
    }
    let mut labels = HashSet::new();
    let mut values = HashSet::new();
    for (i, o) in options.iter().enumerate() {
        if o.id.index() != i {
            return Err(Error::Config(format!(
                "option ids must be dense from 0 in order; found {} at position {i}",
                o.id
            )));
        }
        if o.label.trim().is_empty() {
            return Err(Error::Config(format!("option {} has an empty label", o.id)));
        }
        if !(o.value.is_finite() && o.value > 0.0) {
            return Err(Error::Config(format!(
                "option {} has non-positive value",
                o.id
            )));
        }
        if !labels.insert(o.label.trim().to_lowercase()) {
            return Err(Error::Config(format!(
                "duplicate option label {:?}",
                o.label
            )));
        }
        if !values.insert(o.value.to_bits()) {
            return Err(Error::Config(format!("duplicate option value {}", o.value)));
        }
    }
    Ok(())
}

/// Parses and validates an options file. Records may appear in any id order.
pub fn parse_options(text: &str) -> Result<Vec<AnswerOption>> {
    let mut options = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let opt: AnswerOption = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: n + 1,
            reason: e.to_string(),
        })?;
        options.push(opt);
    }
    options.sort_by_key(|o| o.id);
    validate_options(&options)?;
    Ok(options)
}

pub fn write_options(options: &[AnswerOption]) -> String {
    let mut out = String::new();
    for o in options {
        out.push_str(&serde_json::to_string(o).expect("option serializes"));
        out.push('\n');
    }
    out
}

/// Index of the option whose value is closest to `x`; ties go to the lower id.
pub fn nearest_option(options: &[AnswerOption], x: f64) -> OptionId {
    let mut best = options[0].id;
    let mut best_d = f64::INFINITY;
    for o in options {
        let d = (o.value - x).abs();
        if d < best_d {
            best = o.id;
            best_d = d;
        }
    }
    best
}
