//! Core of the legal-aid intake triage platform.
//!
//! The crate is `no_std` and needs only `alloc`. It holds the program and
//! applicant types, the formal eligibility gate, the screening protocol
//! (prompt assembly, reply parsing, the bounded follow-up loop) and the
//! evaluation metrics. Transport, storage and clocks live in the `intake`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod domain;
pub mod eval;
pub mod provider;
pub mod rules;
pub mod screener;

pub use domain::{
    normalize_location, validate_program, ApplicantProfile, Determination, DeterminationKind, Label, Program,
    ProgramId, Referral, Role, ScreeningOutcome, Timestamp, Transcript, Turn, ValidationError,
};
pub use provider::{Provider, ProviderError, Unavailable};
pub use rules::{check_formal_eligibility, route_program, FormalConfig, FormalResult, RoutingTable};
