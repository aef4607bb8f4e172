//! Completion post-processing: reasoning-tag stripping, summary extraction,
//! and score extraction with format-violation flagging.
//!
//! Invalid outcomes are not errors; they gate the trajectory to zero reward
//! downstream.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::schema::Score;

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";

/// Why a completion failed format checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidReason {
    MissingThinkClose,
    EmptySummary,
    NoScoreToken,
    ScoreOutOfRange,
    NonIntegerScore,
}

/// Result of parsing a completion: a payload or a violation reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseOutcome<T> {
    Valid(T),
    Invalid(InvalidReason),
}

impl<T> ParseOutcome<T> {
    pub fn is_valid(&self) -> bool {
        matches!(self, ParseOutcome::Valid(_))
    }

    pub fn valid(&self) -> Option<&T> {
        match self {
            ParseOutcome::Valid(v) => Some(v),
            ParseOutcome::Invalid(_) => None,
        }
    }

    pub fn invalid_reason(&self) -> Option<InvalidReason> {
        match self {
            ParseOutcome::Valid(_) => None,
            ParseOutcome::Invalid(r) => Some(*r),
        }
    }
}

/// Strips reasoning tags from a completion.
///
/// Text after the last `</think>` wins. An opening tag without a close is a
/// format violation. With `require_tags` set, tag-free completions count as
/// empty; otherwise the whole trimmed completion passes through.
pub fn strip_think(completion: &str, require_tags: bool) -> ParseOutcome<String> {
    if let Some(pos) = completion.rfind(THINK_CLOSE) {
        return ParseOutcome::Valid(completion[pos + THINK_CLOSE.len()..].trim().to_string());
    }
    if completion.contains(THINK_OPEN) {
        return ParseOutcome::Invalid(InvalidReason::MissingThinkClose);
    }
    if require_tags {
        ParseOutcome::Invalid(InvalidReason::EmptySummary)
    } else {
        ParseOutcome::Valid(completion.trim().to_string())
    }
}

/// Extracts the Stage-1 summary; empty after stripping means zero reward.
pub fn extract_summary(completion: &str, require_tags: bool) -> ParseOutcome<String> {
    match strip_think(completion, require_tags) {
        ParseOutcome::Valid(s) if s.is_empty() => ParseOutcome::Invalid(InvalidReason::EmptySummary),
        other => other,
    }
}

fn score_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // token boundary: start of text or a non-alphanumeric character
    RE.get_or_init(|| Regex::new(r"(?i)(?:^|[^0-9a-zA-Z])score[ \t]*:[ \t]*([0-9]+)").unwrap())
}

/// Extracts the Stage-2 score after tag stripping.
///
/// The first `score : <digits>` token wins. A decimal point right after the
/// digits rejects the match instead of silently truncating it.
pub fn extract_score(completion: &str, require_tags: bool) -> ParseOutcome<Score> {
    let text = match strip_think(completion, require_tags) {
        ParseOutcome::Valid(t) => t,
        ParseOutcome::Invalid(r) => return ParseOutcome::Invalid(r),
    };
    let caps = match score_regex().captures(&text) {
        Some(c) => c,
        None => return ParseOutcome::Invalid(InvalidReason::NoScoreToken),
    };
    let digits = caps.get(1).expect("capture group");
    let rest = &text[digits.end()..];
    let mut rest_chars = rest.chars();
    if rest_chars.next() == Some('.') && rest_chars.next().is_some_and(|c| c.is_ascii_digit()) {
        return ParseOutcome::Invalid(InvalidReason::NonIntegerScore);
    }
    match digits.as_str().parse::<u64>() {
        Ok(v) if v <= Score::MAX as u64 => ParseOutcome::Valid(Score::new(v as u8).unwrap()),
        // out of 0..=6, or too many digits to parse at all
        _ => ParseOutcome::Invalid(InvalidReason::ScoreOutOfRange),
    }
}
