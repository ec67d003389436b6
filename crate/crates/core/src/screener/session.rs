//! Bounded follow-up conversation.
//!
//! A session starts with the applicant's problem description, may ask up to
//! [`MAX_FOLLOW_UP_QUESTIONS`] follow-up questions and then closes with a
//! determination. A closed session is never modified again.

use alloc::format;
use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{
    Determination, DeterminationKind, Label, Program, ProgramId, Referral, Role, ScreeningOutcome, Timestamp,
    Transcript,
};
use crate::provider::{Provider, ProviderError};
use crate::screener::parse::{parse_screening_response, ParseAmbiguous};
use crate::screener::prompt::{assemble_prompt, DecodeParams, InstructionSet, PromptPayload};

pub const MAX_FOLLOW_UP_QUESTIONS: u8 = 10;

pub const DISCLAIMER: &str = "This recommendation was produced by an AI tool and it can be wrong. \
It is not legal advice and it is not a final decision on your application.";

/// Opaque session identifier. Generated outside this crate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloseReason {
    Accepted,
    Denied,
    QuestionLimit,
    UnreadableReply,
    Refused,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Closure {
    pub kind: DeterminationKind,
    pub reason: CloseReason,
    /// The model's explanation, when the session closed on a parsed reply.
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    AwaitingDescription,
    AwaitingAnswer,
    Closed(Closure),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    id: SessionId,
    program_id: ProgramId,
    transcript: Transcript,
    questions_asked: u8,
    phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    AskUser(String),
    Close(DeterminationKind),
    /// The provider could not be reached; the session is unchanged.
    RetryLater(ProviderError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionError {
    Closed,
    EmptyText,
    ProgramMismatch { expected: ProgramId, got: ProgramId },
}

impl fmt::Display for SessionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionError::Closed => f.write_str("session is closed"),
            SessionError::EmptyText => f.write_str("applicant text is empty"),
            SessionError::ProgramMismatch { expected, got } => {
                write!(f, "session belongs to program `{expected}`, not `{got}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionNotClosed;

impl fmt::Display for SessionNotClosed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("session is not closed")
    }
}

/// Result of one screening call including the optional format retry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScreeningCall {
    pub result: Result<ScreeningOutcome, CallFailure>,
    /// Text of the last reply received, empty when none arrived.
    pub raw: String,
    pub parse_retries: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallFailure {
    Unreadable(ParseAmbiguous),
    Provider(ProviderError),
}

/// Sends `payload`, retrying once with a format reminder when the first
/// reply cannot be parsed.
pub fn screen_with_retry(provider: &dyn Provider, payload: &PromptPayload) -> ScreeningCall {
    let raw = match provider.complete(payload) {
        Ok(r) => r,
        Err(e) => return ScreeningCall { result: Err(CallFailure::Provider(e)), raw: String::new(), parse_retries: 0 },
    };
    match parse_screening_response(&raw) {
        Ok(o) => ScreeningCall { result: Ok(o), raw, parse_retries: 0 },
        Err(_) => {
            let retry = payload.with_format_reminder();
            match provider.complete(&retry) {
                Ok(raw) => {
                    let result = parse_screening_response(&raw).map_err(CallFailure::Unreadable);
                    ScreeningCall { result, raw, parse_retries: 1 }
                }
                Err(e) => ScreeningCall { result: Err(CallFailure::Provider(e)), raw, parse_retries: 1 },
            }
        }
    }
}

/// Everything a screening round needs besides the session itself.
#[derive(Debug, Clone, Copy)]
pub struct ScreeningContext<'a> {
    pub instructions: &'a InstructionSet,
    pub program: &'a Program,
    pub params: DecodeParams,
}

impl SessionState {
    pub fn new(id: SessionId, program_id: ProgramId) -> Self {
        SessionState {
            id,
            program_id,
            transcript: Transcript::new(),
            questions_asked: 0,
            phase: Phase::AwaitingDescription,
        }
    }

    pub fn id(&self) -> &SessionId {
        &self.id
    }

    pub fn program_id(&self) -> &ProgramId {
        &self.program_id
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn questions_asked(&self) -> u8 {
        self.questions_asked
    }

    pub fn phase(&self) -> &Phase {
        &self.phase
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.phase, Phase::Closed(_))
    }

    /// Adds the applicant's text, runs one screening round and applies the
    /// reply.
    ///
    /// A denial only ever comes from an explicitly parsed `DOES_NOT_QUALIFY`
    /// reply. Replies that stay unreadable after the retry, refusals, and a
    /// question past the limit all close for human review. When the provider
    /// is unreachable the applicant turn is rolled back and
    /// [`Action::RetryLater`] is returned.
    pub fn advance(
        &mut self,
        ctx: ScreeningContext<'_>,
        applicant_text: &str,
        provider: &dyn Provider,
        now: Timestamp,
    ) -> Result<Action, SessionError> {
        if self.is_closed() {
            return Err(SessionError::Closed);
        }
        if ctx.program.id != self.program_id {
            return Err(SessionError::ProgramMismatch { expected: self.program_id.clone(), got: ctx.program.id.clone() });
        }
        if applicant_text.trim().is_empty() {
            return Err(SessionError::EmptyText);
        }
        self.transcript.push(Role::Applicant, applicant_text, now).map_err(|_| SessionError::EmptyText)?;

        let payload = assemble_prompt(ctx.instructions, ctx.program, &self.transcript, ctx.params)
            .expect("transcript has an applicant turn");
        let call = screen_with_retry(provider, &payload);

        let action = match call.result {
            Ok(outcome) => match outcome.status() {
                Label::Accept => {
                    self.close(DeterminationKind::Qualifies, CloseReason::Accepted, Some(outcome.explanation().into()))
                }
                Label::Deny => self.close(
                    DeterminationKind::DoesNotQualify,
                    CloseReason::Denied,
                    Some(outcome.explanation().into()),
                ),
                Label::Question if self.questions_asked < MAX_FOLLOW_UP_QUESTIONS => {
                    let q: String = outcome.question_text().unwrap_or_default().into();
                    self.transcript.push(Role::System, q.clone(), now).map_err(|_| SessionError::EmptyText)?;
                    self.questions_asked += 1;
                    self.phase = Phase::AwaitingAnswer;
                    Action::AskUser(q)
                }
                Label::Question => self.close(DeterminationKind::HumanReview, CloseReason::QuestionLimit, None),
            },
            Err(CallFailure::Unreadable(_)) => {
                self.close(DeterminationKind::HumanReview, CloseReason::UnreadableReply, None)
            }
            Err(CallFailure::Provider(ProviderError::ContentRefused { .. })) => {
                self.close(DeterminationKind::HumanReview, CloseReason::Refused, None)
            }
            Err(CallFailure::Provider(e)) => {
                self.transcript.pop();
                Action::RetryLater(e)
            }
        };
        Ok(action)
    }

    fn close(&mut self, kind: DeterminationKind, reason: CloseReason, explanation: Option<String>) -> Action {
        self.phase = Phase::Closed(Closure { kind, reason, explanation });
        Action::Close(kind)
    }
}

/// Free-function form of [`SessionState::advance`].
pub fn advance_session(
    state: &mut SessionState,
    ctx: ScreeningContext<'_>,
    applicant_text: &str,
    provider: &dyn Provider,
    now: Timestamp,
) -> Result<Action, SessionError> {
    state.advance(ctx, applicant_text, provider, now)
}

fn human_review_text(reason: CloseReason, program: &Program) -> String {
    let why = match reason {
        CloseReason::QuestionLimit => "We could not reach a recommendation after the follow-up questions.",
        CloseReason::Refused => "The AI tool was not able to review your description.",
        _ => "The AI tool could not give a clear recommendation.",
    };
    format!(
        "{why} A person at {} needs to review your situation. Please call {} to complete a phone intake.",
        program.name, program.phone
    )
}

/// Turns a closed session into the applicant-facing determination.
pub fn finalize(state: &SessionState, program: &Program) -> Result<Determination, SessionNotClosed> {
    let Phase::Closed(closure) = &state.phase else {
        return Err(SessionNotClosed);
    };
    let (message, explanation) = match closure.kind {
        DeterminationKind::Qualifies => (
            format!(
                "You probably qualify for help from {}. Contact the program to complete a full intake.",
                program.name
            ),
            closure.explanation.clone().unwrap_or_default(),
        ),
        DeterminationKind::DoesNotQualify => (
            format!(
                "Based on what you told us, you probably do not qualify for help from {}. \
                 You can still contact the program to ask about your situation.",
                program.name
            ),
            closure.explanation.clone().unwrap_or_default(),
        ),
        DeterminationKind::HumanReview => (
            format!("Please call {} so intake staff can review your situation.", program.phone),
            human_review_text(closure.reason, program),
        ),
    };
    Ok(Determination {
        kind: closure.kind,
        message,
        explanation,
        disclaimer: DISCLAIMER.into(),
        referral: Referral::for_program(program),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::Unavailable;
    use alloc::vec::Vec;
    use std::sync::Mutex;

    struct Fixed(Mutex<Vec<Result<String, ProviderError>>>, Mutex<usize>);

    impl Fixed {
        fn new(replies: &[&str]) -> Self {
            Fixed(Mutex::new(replies.iter().rev().map(|r| Ok((*r).into())).collect()), Mutex::new(0))
        }
        fn err(e: ProviderError) -> Self {
            Fixed(Mutex::new(alloc::vec![Err(e)]), Mutex::new(0))
        }
        fn calls(&self) -> usize {
            *self.1.lock().unwrap()
        }
    }

    impl Provider for Fixed {
        fn complete(&self, _: &PromptPayload) -> Result<String, ProviderError> {
            *self.1.lock().unwrap() += 1;
            let mut q = self.0.lock().unwrap();
            if q.len() > 1 { q.pop().unwrap() } else { q.last().cloned().unwrap() }
        }
    }

    fn program() -> Program {
        Program {
            id: ProgramId::new("eastern"),
            name: "Eastern Legal Aid".into(),
            service_area: ["63101".into()].into_iter().collect(),
            rules_text: "We accept eviction cases.".into(),
            website: "https://eastern.example.org".into(),
            phone: "555-0100".into(),
            rules_updated_at: Timestamp(0),
        }
    }

    fn run<P: Provider>(p: &P, answers: usize) -> (SessionState, Vec<Action>) {
        let prog = program();
        let instr = InstructionSet::default();
        let ctx = ScreeningContext { instructions: &instr, program: &prog, params: DecodeParams::default() };
        let mut s = SessionState::new(SessionId("s1".into()), prog.id.clone());
        let mut actions = Vec::new();
        for step in 0..=answers {
            if s.is_closed() {
                break;
            }
            let a = s.advance(ctx, "some text", p, Timestamp(step as u64 + 1)).unwrap();
            assert!(s.questions_asked() <= MAX_FOLLOW_UP_QUESTIONS);
            actions.push(a);
        }
        (s, actions)
    }

    #[test]
    fn accept_closes_with_hedged_language() {
        let p = Fixed::new(&["STATUS: QUALIFIES\nEXPLANATION: no heat is covered"]);
        let (s, actions) = run(&p, 0);
        assert_eq!(actions, [Action::Close(DeterminationKind::Qualifies)]);
        let d = finalize(&s, &program()).unwrap();
        assert_eq!(d.kind, DeterminationKind::Qualifies);
        assert!(d.message.contains("you probably qualify") || d.message.contains("You probably qualify"));
        assert_eq!(d.explanation, "no heat is covered");
        assert_eq!(d.referral, Referral { website: "https://eastern.example.org".into(), phone: "555-0100".into() });
        assert!(!d.disclaimer.is_empty());
    }

    #[test]
    fn always_question_hits_cap() {
        let p = Fixed::new(&["STATUS: QUESTION\nQUESTION: When?\nEXPLANATION: need date"]);
        let (s, actions) = run(&p, 20);
        let asks = actions.iter().filter(|a| matches!(a, Action::AskUser(_))).count();
        assert_eq!(asks, 10);
        assert_eq!(actions.len(), 11);
        assert_eq!(actions.last(), Some(&Action::Close(DeterminationKind::HumanReview)));
        assert_eq!(p.calls(), 11);
        assert_eq!(s.questions_asked(), 10);
        let d = finalize(&s, &program()).unwrap();
        assert_eq!(d.kind, DeterminationKind::HumanReview);
        assert!(d.explanation.contains("555-0100"));
    }

    #[test]
    fn gibberish_twice_is_human_review() {
        let p = Fixed::new(&["I think you should sue.", "Honestly, no idea."]);
        let (s, actions) = run(&p, 0);
        assert_eq!(actions, [Action::Close(DeterminationKind::HumanReview)]);
        assert_eq!(p.calls(), 2);
        assert!(matches!(s.phase(), Phase::Closed(Closure { reason: CloseReason::UnreadableReply, .. })));
    }

    #[test]
    fn retry_recovers_from_one_bad_reply() {
        let p = Fixed::new(&["sure!", "STATUS: DOES_NOT_QUALIFY\nEXPLANATION: commercial lease"]);
        let (_, actions) = run(&p, 0);
        assert_eq!(actions, [Action::Close(DeterminationKind::DoesNotQualify)]);
    }

    #[test]
    fn refusal_is_human_review() {
        let p = Fixed::err(ProviderError::ContentRefused { detail: "policy".into() });
        let (_, actions) = run(&p, 0);
        assert_eq!(actions, [Action::Close(DeterminationKind::HumanReview)]);
    }

    #[test]
    fn unavailable_leaves_session_untouched() {
        let p = Fixed::err(ProviderError::Unavailable(Unavailable::Transport("timeout".into())));
        let prog = program();
        let instr = InstructionSet::default();
        let ctx = ScreeningContext { instructions: &instr, program: &prog, params: DecodeParams::default() };
        let mut s = SessionState::new(SessionId("s".into()), prog.id.clone());
        let before = s.clone();
        let a = s.advance(ctx, "hello", &p, Timestamp(1)).unwrap();
        assert!(matches!(a, Action::RetryLater(_)));
        assert_eq!(s, before);
    }

    #[test]
    fn closed_session_is_frozen() {
        let p = Fixed::new(&["STATUS: QUALIFIES\nEXPLANATION: ok"]);
        let (mut s, _) = run(&p, 0);
        let before = s.clone();
        let prog = program();
        let instr = InstructionSet::default();
        let ctx = ScreeningContext { instructions: &instr, program: &prog, params: DecodeParams::default() };
        assert_eq!(s.advance(ctx, "more", &p, Timestamp(9)), Err(SessionError::Closed));
        assert_eq!(s, before);
    }

    #[test]
    fn finalize_open_session_fails() {
        let s = SessionState::new(SessionId("s".into()), ProgramId::new("eastern"));
        assert_eq!(finalize(&s, &program()), Err(SessionNotClosed));
    }

    #[test]
    fn question_then_answer_then_determination() {
        let p = Fixed::new(&[
            "STATUS: QUESTION\nQUESTION: Has your landlord filed an eviction against you in court?\nEXPLANATION: court status decides",
            "STATUS: QUALIFIES\nEXPLANATION: eviction defense",
        ]);
        let (s, actions) = run(&p, 1);
        assert_eq!(
            actions,
            [
                Action::AskUser("Has your landlord filed an eviction against you in court?".into()),
                Action::Close(DeterminationKind::Qualifies)
            ]
        );
        let roles: Vec<_> = s.transcript().turns().iter().map(|t| t.role).collect();
        assert_eq!(roles, [Role::Applicant, Role::System, Role::Applicant]);
    }
}
