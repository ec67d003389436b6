//! Value types shared by every layer of the intake pipeline.
//!
//! Nothing here performs I/O. Timestamps are supplied by the caller as
//! milliseconds since the Unix epoch so the crate stays usable without `std`.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Upper bound on the length of a program's intake rules, in characters.
pub const MAX_RULES_CHARS: usize = 50_000;

/// Milliseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

/// Short stable identifier of a legal-aid program, e.g. `eastern`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProgramId(pub String);

impl ProgramId {
    pub fn new(id: impl Into<String>) -> Self {
        ProgramId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProgramId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidLocation;

impl fmt::Display for InvalidLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("location is empty after normalization")
    }
}

/// Normalizes a user-entered location into a routing key.
///
/// Whitespace is trimmed and collapsed, letters are case-folded. A US
/// ZIP+4 code (`63101-1234`) is reduced to its five-digit postal code.
pub fn normalize_location(raw: &str) -> Result<String, InvalidLocation> {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    if out.is_empty() {
        return Err(InvalidLocation);
    }
    if is_zip_plus_four(&out) {
        out.truncate(5);
    }
    Ok(out)
}

fn is_zip_plus_four(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[..5].iter().all(u8::is_ascii_digit)
        && b[5] == b'-'
        && b[6..].iter().all(u8::is_ascii_digit)
}

/// True when `key` is already in normalized form.
pub fn is_normalized_location(key: &str) -> bool {
    matches!(normalize_location(key), Ok(n) if n == key)
}

/// The three outcomes a screening reply (or a gold annotation) can take.
///
/// Ordering is `Accept < Deny < Question`, which is also the column order
/// used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Accept,
    Deny,
    Question,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Accept, Label::Deny, Label::Question];

    pub fn index(self) -> usize {
        match self {
            Label::Accept => 0,
            Label::Deny => 1,
            Label::Question => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Accept => "accept",
            Label::Deny => "deny",
            Label::Question => "question",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Label::Accept => "Accept",
            Label::Deny => "Deny",
            Label::Question => "Question",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel(pub String);

impl fmt::Display for UnknownLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown label `{}` (expected accept, deny or question)", self.0)
    }
}

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("accept") {
            Ok(Label::Accept)
        } else if t.eq_ignore_ascii_case("deny") {
            Ok(Label::Deny)
        } else if t.eq_ignore_ascii_case("question") {
            Ok(Label::Question)
        } else {
            Err(UnknownLabel(s.to_string()))
        }
    }
}

/// A legal-aid provider and its substantive intake rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub id: ProgramId,
    pub name: String,
    pub service_area: BTreeSet<String>,
    /// Intake rules exactly as the program wrote them.
    pub rules_text: String,
    #[serde(default)]
    pub website: String,
    #[serde(default)]
    pub phone: String,
    #[serde(default)]
    pub rules_updated_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationError {
    EmptyRules,
    RulesTooLong { chars: usize },
    EmptyServiceArea,
    UnnormalizedLocation(String),
    MissingReferral,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationError::EmptyRules => f.write_str("rules_text is empty"),
            ValidationError::RulesTooLong { chars } => {
                write!(f, "rules_text has {chars} characters (limit {MAX_RULES_CHARS})")
            }
            ValidationError::EmptyServiceArea => f.write_str("service_area is empty"),
            ValidationError::UnnormalizedLocation(k) => {
                write!(f, "service_area key `{k}` is not normalized")
            }
            ValidationError::MissingReferral => f.write_str("website and phone are both required"),
        }
    }
}

/// Checks a rules text against the length limits.
pub fn validate_rules_text(text: &str) -> Result<(), ValidationError> {
    if text.trim().is_empty() {
        return Err(ValidationError::EmptyRules);
    }
    let chars = text.chars().count();
    if chars > MAX_RULES_CHARS {
        return Err(ValidationError::RulesTooLong { chars });
    }
    Ok(())
}

/// Returns the program unchanged when every invariant holds, otherwise the
/// first violated one.
pub fn validate_program(p: Program) -> Result<Program, ValidationError> {
    validate_rules_text(&p.rules_text)?;
    if p.service_area.is_empty() {
        return Err(ValidationError::EmptyServiceArea);
    }
    if let Some(bad) = p.service_area.iter().find(|k| !is_normalized_location(k)) {
        return Err(ValidationError::UnnormalizedLocation(bad.clone()));
    }
    if p.website.trim().is_empty() || p.phone.trim().is_empty() {
        return Err(ValidationError::MissingReferral);
    }
    Ok(p)
}

/// Facts collected on the formal-eligibility screens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicantProfile {
    pub location: String,
    pub household_size: u32,
    /// Whole currency units per year.
    #[serde(default)]
    pub annual_income: Option<u64>,
    #[serde(default)]
    pub status_category: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeterminationKind {
    Qualifies,
    DoesNotQualify,
    HumanReview,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Referral {
    pub website: String,
    pub phone: String,
}

impl Referral {
    pub fn for_program(p: &Program) -> Self {
        Referral { website: p.website.clone(), phone: p.phone.clone() }
    }
}

/// What the applicant is finally told.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Determination {
    pub kind: DeterminationKind,
    /// Applicant-facing headline in hedged language.
    pub message: String,
    pub explanation: String,
    pub disclaimer: String,
    pub referral: Referral,
}

/// A screening reply after parsing.
///
/// Only constructible through [`ScreeningOutcome::new`], which enforces that a
/// question text is present exactly when the status is `Question`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScreeningOutcome {
    status: Label,
    question_text: Option<String>,
    explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutcomeError {
    QuestionWithoutText,
    TextWithoutQuestion,
    EmptyExplanation,
}

impl fmt::Display for OutcomeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutcomeError::QuestionWithoutText => "status question requires question text",
            OutcomeError::TextWithoutQuestion => "question text is only allowed with status question",
            OutcomeError::EmptyExplanation => "explanation is empty",
        })
    }
}

impl ScreeningOutcome {
    pub fn new(
        status: Label,
        question_text: Option<String>,
        explanation: String,
    ) -> Result<Self, OutcomeError> {
        match (status, &question_text) {
            (Label::Question, None) => return Err(OutcomeError::QuestionWithoutText),
            (Label::Question, Some(q)) if q.trim().is_empty() => {
                return Err(OutcomeError::QuestionWithoutText)
            }
            (Label::Accept | Label::Deny, Some(_)) => return Err(OutcomeError::TextWithoutQuestion),
            _ => {}
        }
        if explanation.trim().is_empty() {
            return Err(OutcomeError::EmptyExplanation);
        }
        Ok(ScreeningOutcome { status, question_text, explanation })
    }

    pub fn status(&self) -> Label {
        self.status
    }

    pub fn question_text(&self) -> Option<&str> {
        self.question_text.as_deref()
    }

    pub fn explanation(&self) -> &str {
        &self.explanation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Applicant,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub role: Role,
    pub text: String,
    pub timestamp: Timestamp,
}

/// Ordered conversation between the applicant and the screener.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    turns: Vec<Turn>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TranscriptError {
    FirstTurnNotApplicant,
    EmptyText,
}

impl fmt::Display for TranscriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TranscriptError::FirstTurnNotApplicant => "the first turn must come from the applicant",
            TranscriptError::EmptyText => "turn text is empty",
        })
    }
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    /// One-turn transcript holding the applicant's problem description.
    pub fn from_description(text: impl Into<String>, at: Timestamp) -> Result<Self, TranscriptError> {
        let mut t = Transcript::new();
        t.push(Role::Applicant, text, at)?;
        Ok(t)
    }

    pub fn push(
        &mut self,
        role: Role,
        text: impl Into<String>,
        at: Timestamp,
    ) -> Result<&Turn, TranscriptError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(TranscriptError::EmptyText);
        }
        if self.turns.is_empty() && role != Role::Applicant {
            return Err(TranscriptError::FirstTurnNotApplicant);
        }
        let index = self.turns.len();
        self.turns.push(Turn { index, role, text, timestamp: at });
        Ok(&self.turns[index])
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub(crate) fn pop(&mut self) -> Option<Turn> {
        self.turns.pop()
    }
}
