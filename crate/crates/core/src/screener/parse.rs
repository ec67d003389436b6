//! Strict reader for the line-token reply grammar.
//!
//! ```text
//! STATUS: QUALIFIES | DOES_NOT_QUALIFY | QUESTION
//! QUESTION: <text>          (required iff status is QUESTION)
//! EXPLANATION: <text>       (always required)
//! ```
//!
//! Keys and the QUALIFIES and QUESTION tokens are case-insensitive. The
//! denial token must appear exactly as `DOES_NOT_QUALIFY`. Text that does not
//! fit the grammar is reported as ambiguous and never mapped to a denial.

use alloc::string::String;
use core::fmt;

use crate::domain::{Label, ScreeningOutcome};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseAmbiguous {
    NoStatus,
    UnknownStatus(String),
    ConflictingStatus,
    MissingQuestion,
    MissingExplanation,
    /// A question line accompanied a final status.
    UnexpectedQuestion,
}

impl fmt::Display for ParseAmbiguous {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseAmbiguous::NoStatus => f.write_str("no STATUS line"),
            ParseAmbiguous::UnknownStatus(s) => write!(f, "unrecognized status `{s}`"),
            ParseAmbiguous::ConflictingStatus => f.write_str("conflicting STATUS lines"),
            ParseAmbiguous::MissingQuestion => f.write_str("status QUESTION without a QUESTION line"),
            ParseAmbiguous::MissingExplanation => f.write_str("no EXPLANATION line"),
            ParseAmbiguous::UnexpectedQuestion => f.write_str("QUESTION line with a final status"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Key {
    Status,
    Question,
    Explanation,
}

fn split_key(line: &str) -> Option<(Key, &str)> {
    const KEYS: [(&str, Key); 3] =
        [("STATUS:", Key::Status), ("QUESTION:", Key::Question), ("EXPLANATION:", Key::Explanation)];
    for (name, key) in KEYS {
        if line.len() >= name.len()
            && line.is_char_boundary(name.len())
            && line[..name.len()].eq_ignore_ascii_case(name)
        {
            return Some((key, line[name.len()..].trim()));
        }
    }
    None
}

fn status_token(value: &str) -> Option<Label> {
    if value.eq_ignore_ascii_case("QUALIFIES") {
        Some(Label::Accept)
    } else if value == "DOES_NOT_QUALIFY" {
        Some(Label::Deny)
    } else if value.eq_ignore_ascii_case("QUESTION") {
        Some(Label::Question)
    } else {
        None
    }
}

fn append(field: &mut Option<String>, text: &str) {
    if let Some(f) = field {
        if !text.is_empty() {
            if !f.is_empty() {
                f.push(' ');
            }
            f.push_str(text);
        }
    }
}

/// Parses a model reply into a [`ScreeningOutcome`].
///
/// Lines following a `QUESTION:` or `EXPLANATION:` line that carry no key
/// are treated as continuations of that field. Only the first question and
/// explanation lines are kept.
pub fn parse_screening_response(raw: &str) -> Result<ScreeningOutcome, ParseAmbiguous> {
    let mut status: Option<Label> = None;
    let mut question: Option<String> = None;
    let mut explanation: Option<String> = None;
    let mut open: Option<Key> = None;

    for line in raw.lines() {
        let line = line.trim();
        match split_key(line) {
            Some((Key::Status, value)) => {
                let s = status_token(value).ok_or_else(|| ParseAmbiguous::UnknownStatus(value.into()))?;
                if status.is_some_and(|prev| prev != s) {
                    return Err(ParseAmbiguous::ConflictingStatus);
                }
                status = Some(s);
                open = None;
            }
            Some((Key::Question, value)) => {
                if question.is_none() {
                    question = Some(value.into());
                    open = Some(Key::Question);
                } else {
                    open = None;
                }
            }
            Some((Key::Explanation, value)) => {
                if explanation.is_none() {
                    explanation = Some(value.into());
                    open = Some(Key::Explanation);
                } else {
                    open = None;
                }
            }
            None => match open {
                Some(Key::Question) => append(&mut question, line),
                Some(Key::Explanation) => append(&mut explanation, line),
                _ => {}
            },
        }
    }

    let status = status.ok_or(ParseAmbiguous::NoStatus)?;
    let question = question.filter(|q| !q.is_empty());
    let explanation = explanation.filter(|e| !e.is_empty()).ok_or(ParseAmbiguous::MissingExplanation)?;
    let question = match (status, question) {
        (Label::Question, None) => return Err(ParseAmbiguous::MissingQuestion),
        (Label::Question, q) => q,
        (_, Some(_)) => return Err(ParseAmbiguous::UnexpectedQuestion),
        (_, None) => None,
    };
    // Every combination that reaches here satisfies the outcome invariants.
    ScreeningOutcome::new(status, question, explanation).map_err(|_| ParseAmbiguous::MissingExplanation)
}
