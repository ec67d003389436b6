//! Screening protocol: prompt assembly, reply parsing and the follow-up loop.

pub mod parse;
pub mod prompt;
pub mod session;

pub use parse::{parse_screening_response, ParseAmbiguous};
pub use prompt::{assemble_prompt, DecodeParams, InstructionSet, PromptError, PromptPayload};
pub use session::{
    advance_session, finalize, screen_with_retry, Action, CallFailure, CloseReason, Closure, Phase,
    ScreeningCall, ScreeningContext, SessionError, SessionId, SessionNotClosed, SessionState, DISCLAIMER,
    MAX_FOLLOW_UP_QUESTIONS,
};
