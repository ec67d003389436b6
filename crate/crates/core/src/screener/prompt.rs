use alloc::string::String;
use core::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::domain::{Program, Role, Transcript};

/// System instructions handed to the model on every screening call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionSet {
    pub version: String,
    pub system_instructions: String,
}

pub const DEFAULT_INSTRUCTIONS_VERSION: &str = "intake-v1";

// Grammar is described, never demonstrated with a sample reply.
const DEFAULT_INSTRUCTIONS: &str = "\
You are screening applicants for a free civil legal aid program. Your only task is to decide \
whether the applicant appears to meet the minimum intake criteria written in the program's \
intake rules. You are not giving legal advice and you must not tell the applicant what to do \
about their problem.

Apply the intake rules exactly as written. Treat them as minimum criteria: if the facts \
described could reasonably fall under any ground the rules accept, the applicant qualifies. \
Wrongly turning away an applicant who qualifies is the worst possible error. Only decide that \
the applicant does not qualify when the rules clearly exclude their situation. When a fact that \
decides the outcome is missing, ask one short follow-up question about that fact instead of \
guessing.

Reply in plain text using exactly these lines and nothing else:
The first line is STATUS: followed by exactly one of the tokens QUALIFIES, DOES_NOT_QUALIFY or \
QUESTION.
When the status is QUESTION, the next line is QUESTION: followed by a single question for the \
applicant. Omit this line for any other status.
The last line is EXPLANATION: followed by a brief explanation that names the part of the \
intake rules your decision relies on.";

const FORMAT_REMINDER: &str = "\
Your previous reply could not be read. Reply again using only the required lines: a STATUS: \
line with exactly one of QUALIFIES, DOES_NOT_QUALIFY or QUESTION, a QUESTION: line only when \
the status is QUESTION, and an EXPLANATION: line.";

impl InstructionSet {
    pub fn new(version: impl Into<String>, system_instructions: impl Into<String>) -> Self {
        InstructionSet { version: version.into(), system_instructions: system_instructions.into() }
    }
}

impl Default for InstructionSet {
    fn default() -> Self {
        InstructionSet::new(DEFAULT_INSTRUCTIONS_VERSION, DEFAULT_INSTRUCTIONS)
    }
}

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 512;

/// Decoding parameters; temperature is pinned to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    #[serde(skip_deserializing)]
    temperature: f32,
    pub max_output_tokens: u32,
}

impl DecodeParams {
    pub fn new(max_output_tokens: u32) -> Self {
        DecodeParams { temperature: 0.0, max_output_tokens: max_output_tokens.max(1) }
    }

    pub fn temperature(&self) -> f32 {
        self.temperature
    }
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams::new(DEFAULT_MAX_OUTPUT_TOKENS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPayload {
    pub system_part: String,
    pub user_part: String,
    pub decode_params: DecodeParams,
}

impl PromptPayload {
    /// Same payload with the output-format reminder appended, used for the
    /// single retry after an unreadable reply.
    pub fn with_format_reminder(&self) -> PromptPayload {
        let mut next = self.clone();
        next.user_part.push_str("\n\n");
        next.user_part.push_str(FORMAT_REMINDER);
        next
    }

    /// Canonical byte encoding, used for fingerprinting.
    pub fn canonical_bytes(&self) -> alloc::vec::Vec<u8> {
        let mut out = String::new();
        let _ = write!(
            out,
            "temperature={}\nmax_output_tokens={}\nsystem={}\n",
            self.decode_params.temperature,
            self.decode_params.max_output_tokens,
            self.system_part.len()
        );
        out.push_str(&self.system_part);
        let _ = write!(out, "\nuser={}\n", self.user_part.len());
        out.push_str(&self.user_part);
        out.into_bytes()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptError {
    EmptyTranscript,
}

impl fmt::Display for PromptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("transcript has no applicant turn")
    }
}

pub(crate) fn render_rules(out: &mut String, program: &Program) {
    let _ = writeln!(out, "INTAKE RULES FOR {}", program.name);
    out.push_str("<<<RULES\n");
    out.push_str(&program.rules_text);
    if !program.rules_text.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("RULES>>>\n");
}

pub(crate) fn render_transcript(out: &mut String, transcript: &Transcript) {
    out.push_str("\nCONVERSATION\n");
    for turn in transcript.turns() {
        let who = match turn.role {
            Role::Applicant => "APPLICANT",
            Role::System => "SCREENER",
        };
        let _ = writeln!(out, "[{}] {}: {}", turn.index + 1, who, turn.text);
    }
}

/// Builds the two-part prompt. Output is a pure function of the inputs.
pub fn assemble_prompt(
    instr: &InstructionSet,
    program: &Program,
    transcript: &Transcript,
    params: DecodeParams,
) -> Result<PromptPayload, PromptError> {
    if !transcript.turns().iter().any(|t| t.role == Role::Applicant) {
        return Err(PromptError::EmptyTranscript);
    }
    let mut user_part = String::with_capacity(program.rules_text.len() + 256);
    render_rules(&mut user_part, program);
    render_transcript(&mut user_part, transcript);
    Ok(PromptPayload { system_part: instr.system_instructions.clone(), user_part, decode_params: params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ProgramId, Timestamp};

    fn program() -> Program {
        Program {
            id: ProgramId::new("p"),
            name: "Test Aid".into(),
            service_area: ["63101".into()].into_iter().collect(),
            rules_text: "  We accept:\n\t1. Evictions   \n2. No heat".into(),
            website: "https://example.org".into(),
            phone: "555".into(),
            rules_updated_at: Timestamp(0),
        }
    }

    #[test]
    fn one_turn_payload_is_rules_then_turn() {
        let p = program();
        let t = Transcript::from_description("My landlord locked me out.", Timestamp(5)).unwrap();
        let payload = assemble_prompt(&InstructionSet::default(), &p, &t, DecodeParams::default()).unwrap();

        let mut expected = String::new();
        render_rules(&mut expected, &p);
        render_transcript(&mut expected, &t);
        assert_eq!(payload.user_part, expected);
        assert!(payload.user_part.contains(&p.rules_text), "rules must be embedded verbatim");
        assert!(payload.user_part.ends_with("[1] APPLICANT: My landlord locked me out.\n"));
        assert_eq!(payload.decode_params.temperature(), 0.0);
    }

    #[test]
    fn deterministic() {
        let p = program();
        let t = Transcript::from_description("x", Timestamp(5)).unwrap();
        let a = assemble_prompt(&InstructionSet::default(), &p, &t, DecodeParams::default()).unwrap();
        let b = assemble_prompt(&InstructionSet::default(), &p, &t, DecodeParams::default()).unwrap();
        assert_eq!(a.canonical_bytes(), b.canonical_bytes());
    }

    #[test]
    fn turns_in_order() {
        let mut t = Transcript::from_description("first", Timestamp(1)).unwrap();
        t.push(Role::System, "second", Timestamp(2)).unwrap();
        t.push(Role::Applicant, "third", Timestamp(3)).unwrap();
        let payload = assemble_prompt(&InstructionSet::default(), &program(), &t, DecodeParams::default()).unwrap();
        let u = &payload.user_part;
        let (a, b, c) = (u.find("[1] APPLICANT: first").unwrap(), u.find("[2] SCREENER: second").unwrap(), u.find("[3] APPLICANT: third").unwrap());
        assert!(a < b && b < c);
    }

    #[test]
    fn empty_transcript_rejected() {
        let r = assemble_prompt(&InstructionSet::default(), &program(), &Transcript::new(), DecodeParams::default());
        assert_eq!(r, Err(PromptError::EmptyTranscript));
    }

    #[test]
    fn default_instructions_contract() {
        let s = InstructionSet::default().system_instructions;
        for token in ["STATUS:", "QUALIFIES", "DOES_NOT_QUALIFY", "QUESTION:", "EXPLANATION:", "minimum intake criteria", "not giving legal advice"] {
            assert!(s.contains(token), "missing {token}");
        }
        // no worked example reply: QUALIFIES never appears as a filled-in status line
        assert!(!s.lines().any(|l| l.trim().starts_with("STATUS:")));
        assert!(!s.to_lowercase().contains("example"));
    }
}
