//! Parsing model output into decisions.
//!
//! Step grammar (line oriented, markers case-insensitive):
//!
//! ```text
//! THINK: free text, may continue on following lines
//! ACTION: <verb>        or        ANSWER: <text>
//! ```
//!
//! The first `ACTION:` or `ANSWER:` line decides. Verbs go through a
//! [`SynonymTable`] loaded from a tab-separated file.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Action;

const DEFAULT_SYNONYMS: &str = include_str!("../prompts/v1/synonyms.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseError {
    #[error("no ACTION:, ANSWER: or SELECT: line found in {span:?}")]
    Unparseable { span: String },
    #[error("unknown action verb {span:?}")]
    UnknownVerb { span: String },
    #[error("index {index} out of range (valid: 0..{limit}) in {span:?}")]
    IndexOutOfRange { index: i64, limit: usize, span: String },
    #[error("selection lists no indices: {span:?}")]
    EmptySelection { span: String },
    #[error("score {value} outside 1..=5 in {span:?}")]
    OutOfRange { value: i64, span: String },
}

impl ParseError {
    /// The offending piece of model output, for quoting in a retry prompt.
    pub fn span(&self) -> &str {
        match self {
            ParseError::Unparseable { span }
            | ParseError::UnknownVerb { span }
            | ParseError::IndexOutOfRange { span, .. }
            | ParseError::EmptySelection { span }
            | ParseError::OutOfRange { span, .. } => span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Decision {
    Act(Action),
    Final(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDecision {
    pub thought: Option<String>,
    pub decision: Decision,
}

impl StepDecision {
    /// Canonical text form, which [`parse_step`] maps back to `self`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(t) = &self.thought {
            out.push_str("THINK: ");
            out.push_str(t);
            out.push('\n');
        }
        match &self.decision {
            Decision::Act(a) => {
                out.push_str("ACTION: ");
                out.push_str(&a.verb());
            }
            Decision::Final(ans) => {
                out.push_str("ANSWER: ");
                out.push_str(ans);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Canonical {
    Motion(usize),
    SwitchTo,
    Answer,
}

fn canonical_from_name(name: &str) -> Option<Canonical> {
    const NAMES: [&str; 12] = [
        "MoveForward",
        "MoveBackward",
        "MoveLeft",
        "MoveRight",
        "MoveUp",
        "MoveDown",
        "YawLeft",
        "YawRight",
        "PitchUp",
        "PitchDown",
        "RollCW",
        "RollCCW",
    ];
    match name {
        "SwitchTo" => Some(Canonical::SwitchTo),
        "Answer" => Some(Canonical::Answer),
        _ => NAMES.iter().position(|n| *n == name).map(Canonical::Motion),
    }
}

/// Surface forms mapped to canonical verbs.
#[derive(Debug, Clone)]
pub struct SynonymTable {
    /// Normalized surface form, longest first.
    entries: Vec<(String, Canonical)>,
}

impl SynonymTable {
    /// Parses `surface<TAB>Canonical` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (surface, name) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected surface<TAB>verb", i + 1))?;
            let canon = canonical_from_name(name.trim())
                .ok_or_else(|| format!("line {}: unknown canonical verb {:?}", i + 1, name.trim()))?;
            let surface = normalize_verb(surface);
            if surface.is_empty() {
                return Err(format!("line {}: empty surface form", i + 1));
            }
            entries.push((surface, canon));
        }
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(SynonymTable { entries })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// The table shipped with the crate.
    pub fn builtin() -> &'static SynonymTable {
        static TABLE: OnceLock<SynonymTable> = OnceLock::new();
        TABLE.get_or_init(|| SynonymTable::parse(DEFAULT_SYNONYMS).expect("builtin synonym table"))
    }

    /// Resolves a verb phrase. `raw` is the text after `ACTION:`.
    pub fn resolve(&self, raw: &str, anchor_count: usize) -> Result<Decision, ParseError> {
        let norm = normalize_verb(raw);
        let squashed: String = norm.chars().filter(|c| *c != ' ').collect();
        let unknown = || ParseError::UnknownVerb {
            span: raw.trim().to_string(),
        };
        if norm.is_empty() {
            return Err(unknown());
        }
        for (surface, canon) in &self.entries {
            let rest = if norm == *surface {
                Some("")
            } else if let Some(r) = norm.strip_prefix(surface.as_str()) {
                r.strip_prefix(' ')
            } else {
                None
            };
            let exact_squashed = surface.replace(' ', "") == squashed;
            let Some(rest) = rest.or(exact_squashed.then_some("")) else {
                continue;
            };
            return match canon {
                Canonical::Motion(i) => Ok(Decision::Act(Action::MOTIONS[*i].clone())),
                Canonical::SwitchTo => {
                    let digits = rest.trim_start_matches(['#', ' ']);
                    let end = digits
                        .char_indices()
                        .find(|(_, c)| !c.is_ascii_digit())
                        .map_or(digits.len(), |(i, _)| i);
                    if end == 0 {
                        continue;
                    }
                    let index = digits[..end].parse::<i64>().unwrap_or(i64::MAX);
                    if index < 0 || index as u64 >= anchor_count as u64 {
                        return Err(ParseError::IndexOutOfRange {
                            index,
                            limit: anchor_count,
                            span: raw.trim().to_string(),
                        });
                    }
                    Ok(Decision::Act(Action::SwitchTo(index as usize)))
                }
                Canonical::Answer => {
                    let text = strip_answer_argument(raw);
                    if text.is_empty() {
                        continue;
                    }
                    Ok(Decision::Final(text))
                }
            };
        }
        Err(unknown())
    }

    /// Whether `surface` resolves to the given motion or switch.
    pub fn contains_surface(&self, surface: &str) -> bool {
        let n = normalize_verb(surface);
        self.entries.iter().any(|(s, _)| *s == n)
    }
}

/// Lowercases, maps `_`, `-` and punctuation to spaces, collapses runs.
fn normalize_verb(s: &str) -> String {
    let mapped: String = s
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '#' {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Text following an `answer` verb inside an ACTION line, case preserved.
fn strip_answer_argument(raw: &str) -> String {
    let t = raw.trim();
    let lower = t.to_lowercase();
    for prefix in ["final answer", "answer", "respond"] {
        if lower.starts_with(prefix) && t.is_char_boundary(prefix.len()) {
            return clean_answer(t[prefix.len()..].trim_start_matches([':', ' ', '-', '\t']));
        }
    }
    clean_answer(t)
}

fn clean_answer(s: &str) -> String {
    s.trim()
        .trim_matches(|c| c == '*' || c == '`')
        .trim()
        .to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Think,
    Action,
    Answer,
}

/// Strips markdown decoration and returns (marker, remainder) for a line
/// that starts with a known marker.
fn split_marker(line: &str) -> Option<(Marker, &str)> {
    let t = line.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '#' | '-' | '>' | '_' | '`'));
    for (name, m) in [
        ("think", Marker::Think),
        ("thought", Marker::Think),
        ("action", Marker::Action),
        ("final answer", Marker::Answer),
        ("answer", Marker::Answer),
    ] {
        let Some(head) = t.get(..name.len()) else { continue };
        if !head.eq_ignore_ascii_case(name) {
            continue;
        }
        let after = t[name.len()..].trim_start_matches(['*', '_', ' ']);
        if let Some(rest) = after.strip_prefix(':') {
            return Some((m, rest.trim_start_matches(['*', '_']).trim()));
        }
    }
    None
}

/// Parses one reasoning step with the builtin synonym table.
pub fn parse_step(text: &str, anchor_count: usize) -> Result<StepDecision, ParseError> {
    parse_step_with(text, anchor_count, SynonymTable::builtin())
}

pub fn parse_step_with(
    text: &str,
    anchor_count: usize,
    table: &SynonymTable,
) -> Result<StepDecision, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut thought: Vec<String> = Vec::new();
    let mut in_think = false;
    for (i, line) in lines.iter().enumerate() {
        match split_marker(line) {
            Some((Marker::Think, rest)) => {
                in_think = true;
                if !rest.is_empty() {
                    thought.push(rest.to_string());
                }
            }
            Some((Marker::Action, rest)) => {
                let rest = if rest.is_empty() {
                    next_content_line(&lines[i + 1..]).unwrap_or("")
                } else {
                    rest
                };
                let decision = table.resolve(rest, anchor_count)?;
                return Ok(StepDecision {
                    thought: join_thought(&thought),
                    decision,
                });
            }
            Some((Marker::Answer, rest)) => {
                let ans = if rest.is_empty() {
                    next_content_line(&lines[i + 1..]).unwrap_or("")
                } else {
                    rest
                };
                let ans = clean_answer(ans);
                if ans.is_empty() {
                    return Err(ParseError::Unparseable {
                        span: line.trim().to_string(),
                    });
                }
                return Ok(StepDecision {
                    thought: join_thought(&thought),
                    decision: Decision::Final(ans),
                });
            }
            None => {
                if in_think && !line.trim().is_empty() {
                    thought.push(line.trim().to_string());
                }
            }
        }
    }
    Err(ParseError::Unparseable {
        span: excerpt(text),
    })
}

fn next_content_line<'a>(lines: &[&'a str]) -> Option<&'a str> {
    lines
        .iter()
        .map(|l| l.trim())
        .find(|l| !l.is_empty())
        .filter(|l| split_marker(l).is_none())
}

fn join_thought(parts: &[String]) -> Option<String> {
    (!parts.is_empty()).then(|| parts.join("\n"))
}

fn excerpt(text: &str) -> String {
    let t = text.trim();
    match t.char_indices().nth(160) {
        Some((i, _)) => format!("{}...", &t[..i]),
        None => t.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Requires a `SELECT:` line.
    Strict,
    /// Falls back to every in-range integer in the text when no `SELECT:`
    /// line is present.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionDecision {
    pub indices: Vec<usize>,
    /// True when the lenient integer scan produced the indices.
    pub used_fallback: bool,
}

/// Integers in `s` with their text, left to right. Digit runs too long for
/// i64 saturate.
fn integers(s: &str) -> Vec<(i64, &str)> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let neg = start > 0 && bytes[start - 1] == b'-' && (start < 2 || !bytes[start - 2].is_ascii_alphanumeric());
            let v = s[start..i].parse::<i64>().unwrap_or(i64::MAX);
            out.push((if neg { -v } else { v }, &s[start..i]));
        } else {
            i += 1;
        }
    }
    out
}

fn find_select_line(text: &str) -> Option<&str> {
    text.lines().find_map(|l| {
        let upper = l.to_ascii_uppercase();
        upper.find("SELECT:").map(|p| &l[p + "SELECT:".len()..])
    })
}

pub fn parse_selection(
    text: &str,
    frame_count: usize,
    k_max: usize,
    mode: SelectionMode,
) -> Result<SelectionDecision, ParseError> {
    let k_max = k_max.max(1);
    if let Some(rest) = find_select_line(text) {
        let span = format!("SELECT:{rest}").trim().to_string();
        let mut indices: Vec<usize> = Vec::new();
        for (v, _) in integers(rest) {
            if v < 0 || v as u64 >= frame_count as u64 {
                return Err(ParseError::IndexOutOfRange {
                    index: v,
                    limit: frame_count,
                    span,
                });
            }
            if !indices.contains(&(v as usize)) {
                indices.push(v as usize);
            }
        }
        if indices.is_empty() {
            return Err(ParseError::EmptySelection { span });
        }
        indices.truncate(k_max);
        return Ok(SelectionDecision {
            indices,
            used_fallback: false,
        });
    }
    if mode == SelectionMode::Strict {
        return Err(ParseError::Unparseable { span: excerpt(text) });
    }
    let mut indices: Vec<usize> = Vec::new();
    for (v, _) in integers(text) {
        if v >= 0 && (v as u64) < frame_count as u64 && !indices.contains(&(v as usize)) {
            indices.push(v as usize);
        }
    }
    if indices.is_empty() {
        return Err(ParseError::Unparseable { span: excerpt(text) });
    }
    indices.truncate(k_max);
    Ok(SelectionDecision {
        indices,
        used_fallback: true,
    })
}

/// First standalone integer in 1..=5. Digits touching letters, decimal
/// points or hyphens (as in a "1-5" rubric echo) are not standalone.
pub fn parse_judge_score(text: &str) -> Result<u8, ParseError> {
    let bytes = text.as_bytes();
    let mut first: Option<i64> = None;
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let before = start.checked_sub(1).map(|j| bytes[j]);
        let after = bytes.get(i).copied();
        let after2 = bytes.get(i + 1).copied();
        let touches = |b: Option<u8>| b.is_some_and(|b| b.is_ascii_alphabetic() || b == b'-' || b == b'_' || b >= 0x80);
        let decimal = before == Some(b'.') || (after == Some(b'.') && after2.is_some_and(|b| b.is_ascii_digit()));
        if touches(before) || touches(after) || decimal {
            continue;
        }
        let v = text[start..i].parse::<i64>().unwrap_or(i64::MAX);
        if (1..=5).contains(&v) {
            return Ok(v as u8);
        }
        first.get_or_insert(v);
    }
    match first {
        Some(value) => Err(ParseError::OutOfRange {
            value,
            span: excerpt(text),
        }),
        None => Err(ParseError::Unparseable { span: excerpt(text) }),
    }
}
