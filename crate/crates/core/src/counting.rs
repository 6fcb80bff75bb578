//! Mention counting rules shared by the observer distiller and the sentiment
//! scorer.
//!
//! A message is split into sentences and tokens. An option is mentioned when
//! its label (as a token sequence) or its numeric value appears as a
//! standalone token. Each mention is worth +1, or -1 when a negation cue
//! appears earlier in the same sentence. In a sentence that supports at least
//! one option, the text after the first causal cue is a rationale for every
//! option supported there.

use std::collections::HashMap;
use std::sync::LazyLock;

use crate::error::{Error, Result};
use crate::options::{AnswerOption, OptionId};

pub const CUES_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CueLists {
    pub negation: Vec<Vec<String>>,
    pub causal: Vec<Vec<String>>,
}

static CUES: LazyLock<CueLists> = LazyLock::new(|| {
    parse_cue_lists(include_str!("../data/cues-v1.txt")).expect("bundled cue lists are valid")
});

pub fn cues() -> &'static CueLists {
    &CUES
}

/// Parses the `[section]`-style cue list format.
pub fn parse_cue_lists(text: &str) -> Result<CueLists> {
    let mut negation = Vec::new();
    let mut causal = Vec::new();
    let mut section: Option<&mut Vec<Vec<String>>> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = match name {
                "negation" => Some(&mut negation),
                "causal" => Some(&mut causal),
                other => {
                    return Err(Error::Parse {
                        line: n + 1,
                        reason: format!("unknown section {other:?}"),
                    })
                }
            };
            continue;
        }
        let Some(list) = section.as_deref_mut() else {
            return Err(Error::Parse {
                line: n + 1,
                reason: "cue outside of a section".into(),
            });
        };
        let toks: Vec<String> = tokenize(line).into_iter().map(|t| t.text).collect();
        if toks.is_empty() {
            return Err(Error::Parse {
                line: n + 1,
                reason: "cue has no tokens".into(),
            });
        }
        list.push(toks);
    }
    Ok(CueLists { negation, causal })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Lowercased token text, with digit-group commas removed.
    pub text: String,
    pub start: usize,
    pub end: usize,
}

fn normalize_char(c: char) -> char {
    match c {
        '\u{2018}' | '\u{2019}' | '\u{02bc}' => '\'',
        c => c,
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Splits into sentences on `! ? ;` and newlines, and on `.` unless it sits
/// between two digits. Returns byte ranges into `text`.
pub fn sentences(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for (i, &(pos, c)) in chars.iter().enumerate() {
        let split = match c {
            '!' | '?' | ';' | '\n' | '\r' => true,
            '.' => {
                let prev_digit = i > 0 && chars[i - 1].1.is_ascii_digit();
                let next_digit = chars.get(i + 1).is_some_and(|(_, n)| n.is_ascii_digit());
                !(prev_digit && next_digit)
            }
            _ => false,
        };
        if split {
            if pos > start {
                out.push((start, pos));
            }
            start = pos + c.len_utf8();
        }
    }
    if start < text.len() {
        out.push((start, text.len()));
    }
    out
}

/// Word tokens: runs of alphanumerics, joined across an inner apostrophe
/// (`don't`) and across `.` or `,` between digits (`7.5`, `1,200`).
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text
        .char_indices()
        .map(|(i, c)| (i, normalize_char(c)))
        .collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !is_word_char(chars[i].1) {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut buf = String::new();
        while i < chars.len() {
            let c = chars[i].1;
            if is_word_char(c) {
                buf.extend(c.to_lowercase());
                i += 1;
                continue;
            }
            let prev = i.checked_sub(1).map(|j| chars[j].1);
            let next = chars.get(i + 1).map(|(_, n)| *n);
            let joins = match c {
                '\'' => {
                    prev.is_some_and(char::is_alphabetic) && next.is_some_and(char::is_alphabetic)
                }
                '.' | ',' => {
                    prev.is_some_and(|p| p.is_ascii_digit())
                        && next.is_some_and(|n| n.is_ascii_digit())
                }
                _ => false,
            };
            if !joins {
                break;
            }
            if c != ',' {
                buf.push(c);
            }
            i += 1;
        }
        let end = chars.get(i).map_or(text.len(), |(p, _)| *p);
        tokens.push(Token {
            text: buf,
            start,
            end,
        });
    }
    tokens
}

fn parse_number(tok: &str) -> Option<f64> {
    if !tok.starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn matches_at(tokens: &[Token], at: usize, pattern: &[String]) -> bool {
    pattern.len() <= tokens.len() - at
        && pattern.iter().zip(&tokens[at..]).all(|(p, t)| *p == t.text)
}

/// One option reference found in a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mention {
    pub option: OptionId,
    pub negated: bool,
}

/// Rule evaluation for one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SentenceReading {
    pub mentions: Vec<Mention>,
    pub rationale: Option<String>,
}

/// Precomputed option patterns.
#[derive(Debug, Clone)]
pub struct Matcher {
    labels: Vec<(OptionId, Vec<String>)>,
    values: Vec<(OptionId, f64)>,
}

impl Matcher {
    pub fn new(options: &[AnswerOption]) -> Self {
        Self {
            labels: options
                .iter()
                .map(|o| {
                    (
                        o.id,
                        tokenize(&o.label)
                            .into_iter()
                            .map(|t| t.text)
                            .collect::<Vec<_>>(),
                    )
                })
                .filter(|(_, toks)| !toks.is_empty())
                .collect(),
            values: options.iter().map(|o| (o.id, o.value)).collect(),
        }
    }

    /// Longest option match starting at `at` as (option, token length).
    fn match_at(&self, tokens: &[Token], at: usize) -> Option<(OptionId, usize)> {
        let mut best: Option<(OptionId, usize)> = None;
        let mut consider = |id: OptionId, len: usize| {
            let better = match best {
                None => true,
                Some((bid, blen)) => len > blen || (len == blen && id < bid),
            };
            if better {
                best = Some((id, len));
            }
        };
        for (id, pat) in &self.labels {
            if matches_at(tokens, at, pat) {
                consider(*id, pat.len());
            }
        }
        if let Some(x) = parse_number(&tokens[at].text) {
            for (id, v) in &self.values {
                if *v == x {
                    consider(*id, 1);
                }
            }
        }
        best
    }

    pub fn read_sentence(&self, sentence: &str) -> SentenceReading {
        let cues = cues();
        let tokens = tokenize(sentence);
        let mut reading = SentenceReading::default();
        let mut negation_seen = false;
        let mut causal_at: Option<usize> = None;
        let mut i = 0;
        while i < tokens.len() {
            if let Some((option, len)) = self.match_at(&tokens, i) {
                reading.mentions.push(Mention {
                    option,
                    negated: negation_seen,
                });
                i += len;
                continue;
            }
            if let Some(len) = cues
                .negation
                .iter()
                .find(|c| matches_at(&tokens, i, c))
                .map(Vec::len)
            {
                negation_seen = true;
                i += len;
                continue;
            }
            if causal_at.is_none() {
                if let Some(len) = cues
                    .causal
                    .iter()
                    .find(|c| matches_at(&tokens, i, c))
                    .map(Vec::len)
                {
                    causal_at = Some(tokens[i + len - 1].end);
                    i += len;
                    continue;
                }
            }
            i += 1;
        }
        if reading.mentions.iter().any(|m| !m.negated) {
            if let Some(at) = causal_at {
                let rest = sentence[at..]
                    .trim()
                    .trim_end_matches(|c: char| c.is_ascii_punctuation())
                    .trim();
                if !rest.is_empty() {
                    reading.rationale = Some(rest.to_owned());
                }
            }
        }
        reading
    }

    pub fn read_message(&self, text: &str) -> Vec<SentenceReading> {
        sentences(text)
            .into_iter()
            .map(|(a, b)| self.read_sentence(&text[a..b]))
            .collect()
    }

    /// Options supported (mentioned without negation) anywhere in `text`.
    pub fn supported(&self, text: &str) -> Vec<OptionId> {
        self.read_message(text)
            .into_iter()
            .flat_map(|r| r.mentions)
            .filter(|m| !m.negated)
            .map(|m| m.option)
            .collect()
    }
}

#[derive(Debug, Clone)]
struct RationaleStat {
    text: String,
    count: usize,
    first: usize,
}

/// Running support tally over a stream of messages.
#[derive(Debug, Clone)]
pub struct Tally {
    matcher: Matcher,
    sums: Vec<i64>,
    mentioned: Vec<bool>,
    rationales: Vec<HashMap<String, RationaleStat>>,
    seen: usize,
}

impl Tally {
    pub fn new(options: &[AnswerOption]) -> Self {
        Self::with_matcher(Matcher::new(options), options.len())
    }

    pub fn with_matcher(matcher: Matcher, option_count: usize) -> Self {
        Self {
            matcher,
            sums: vec![0; option_count],
            mentioned: vec![false; option_count],
            rationales: vec![HashMap::new(); option_count],
            seen: 0,
        }
    }

    pub fn add(&mut self, text: &str) {
        let order = self.seen;
        self.seen += 1;
        for reading in self.matcher.read_message(text) {
            for m in &reading.mentions {
                self.sums[m.option.index()] += if m.negated { -1 } else { 1 };
                self.mentioned[m.option.index()] = true;
            }
            let Some(rationale) = reading.rationale else {
                continue;
            };
            let key = rationale
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .to_lowercase();
            let mut supported: Vec<OptionId> = reading
                .mentions
                .iter()
                .filter(|m| !m.negated)
                .map(|m| m.option)
                .collect();
            supported.dedup();
            for id in supported {
                self.rationales[id.index()]
                    .entry(key.clone())
                    .and_modify(|s| s.count += 1)
                    .or_insert_with(|| RationaleStat {
                        text: rationale.clone(),
                        count: 1,
                        first: order,
                    });
            }
        }
    }

    pub fn raw_sums(&self) -> &[i64] {
        &self.sums
    }

    pub fn any_mentioned(&self) -> bool {
        self.mentioned.iter().any(|m| *m)
    }

    /// Per-option support clipped at zero.
    pub fn weights(&self) -> Vec<f64> {
        self.sums.iter().map(|&s| s.max(0) as f64).collect()
    }

    /// Rationales for `option`, most frequent first, earliest first on ties.
    pub fn rationales(&self, option: OptionId) -> Vec<String> {
        let mut stats: Vec<&RationaleStat> = self.rationales[option.index()].values().collect();
        stats.sort_by(|a, b| b.count.cmp(&a.count).then(a.first.cmp(&b.first)));
        stats.into_iter().map(|s| s.text.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::options::numeric_options;

    fn opts() -> Vec<AnswerOption> {
        numeric_options(&[500.0, 720.0, 1000.0])
    }

    fn sums(texts: &[&str]) -> Vec<i64> {
        let mut t = Tally::new(&opts());
        texts.iter().for_each(|x| t.add(x));
        t.raw_sums().to_vec()
    }

    #[test]
    fn cue_file_parses() {
        let c = cues();
        assert_eq!(c.negation.len(), 6);
        assert!(c
            .negation
            .contains(&vec!["too".to_string(), "high".to_string()]));
        assert_eq!(c.causal.len(), 3);
        assert!(parse_cue_lists("not\n").is_err());
        assert!(parse_cue_lists("[bogus]\n").is_err());
    }

    #[test]
    fn tokenizer_keeps_numbers_and_contractions() {
        let toks: Vec<String> = tokenize("I don't think 1,000 or 7.5 — it’s 720!")
            .into_iter()
            .map(|t| t.text)
            .collect();
        assert_eq!(
            toks,
            ["i", "don't", "think", "1000", "or", "7.5", "it's", "720"]
        );
    }

    #[test]
    fn sentence_split_respects_decimals() {
        let text = "It is 7.5 cm. Next one";
        let s: Vec<&str> = sentences(text)
            .into_iter()
            .map(|(a, b)| &text[a..b])
            .collect();
        assert_eq!(s, ["It is 7.5 cm", " Next one"]);
    }

    #[test]
    fn standalone_tokens_only() {
        assert_eq!(sums(&["7200 or 5000 or x720"]), vec![0, 0, 0]);
        assert_eq!(sums(&["(720)", "720.0 is it"]), vec![0, 2, 0]);
    }

    #[test]
    fn negation_applies_only_later_in_sentence() {
        assert_eq!(sums(&["720 is not right"]), vec![0, 1, 0]);
        assert_eq!(sums(&["not 720"]), vec![0, -1, 0]);
        assert_eq!(sums(&["too high, 1000. but 500"]), vec![1, 0, -1]);
        assert_eq!(sums(&["I doubt 720; 720 it is"]), vec![0, 0, 0]);
    }

    #[test]
    fn rationale_after_first_causal_cue() {
        let mut t = Tally::new(&opts());
        t.add("I think 720 because the jar is tall.");
        t.add("720 since it is big");
        t.add("720 because THE jar   is tall");
        assert_eq!(
            t.rationales(OptionId(1)),
            vec!["the jar is tall".to_string(), "it is big".to_string()]
        );
        t.add("I doubt 500 because it is small");
        assert!(t.rationales(OptionId(0)).is_empty());
    }

    #[test]
    fn labels_can_be_words() {
        let options = vec![
            AnswerOption::new(0, "a lot", 900.0),
            AnswerOption::new(1, "few", 100.0),
        ];
        let mut t = Tally::new(&options);
        t.add("There are a lot here, not few");
        assert_eq!(t.raw_sums(), &[1, -1]);
    }
}
