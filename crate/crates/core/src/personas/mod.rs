//! Agent personas: prompt rendering and reply parsing.
//!
//! The Trust, Skeptic and Leader prompts are fixed template files under
//! `templates/`; the Initial prompt follows the same layout. Every prompt is
//! the role template followed by an input block holding the claim, the
//! numbered evidence and the opinions the agent must respond to.

mod parse;

use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};
use crate::model::{AgentOpinion, AgentRole, EvidenceSnippet};

pub use parse::{parse_opinion, serialize_opinion, ParseFailure};

/// Bumped whenever any template file changes; recorded in every transcript.
pub const TEMPLATE_VERSION: &str = "v1";

const RUBRIC: &str = include_str!("../../templates/rubric.txt");
const INITIAL: &str = include_str!("../../templates/initial.txt");
const TRUST: &str = include_str!("../../templates/trust.txt");
const SKEPTIC: &str = include_str!("../../templates/skeptic.txt");
const LEADER: &str = include_str!("../../templates/leader.txt");
const REPAIR: &str = include_str!("../../templates/repair.txt");

pub(crate) const CLAIMS_TEMPLATE: &str = include_str!("../../templates/claims.txt");
pub(crate) const QUERIES_TEMPLATE: &str = include_str!("../../templates/queries.txt");
pub(crate) const SUBJECTIVE_TEMPLATE: &str = include_str!("../../templates/subjective.txt");

pub const DEFAULT_OPINION_RETRIES: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PersonaError {
    #[error("{role} prompt expects {expected} prior opinion(s), got {found}")]
    ContextMismatch {
        role: AgentRole,
        expected: &'static str,
        found: usize,
    },
    #[error("{role} reply unparseable after {attempts} attempt(s): {last}")]
    OpinionUnparseable {
        role: AgentRole,
        attempts: u32,
        last: ParseFailure,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub claim_text: String,
    pub evidence: Vec<EvidenceSnippet>,
    pub prior_opinions: Vec<AgentOpinion>,
}

impl PromptContext {
    pub fn new(
        claim_text: impl Into<String>,
        evidence: Vec<EvidenceSnippet>,
        prior_opinions: Vec<AgentOpinion>,
    ) -> Self {
        Self {
            claim_text: claim_text.into(),
            evidence,
            prior_opinions,
        }
    }
}

/// The role's instruction text with the severity rubric spliced in.
pub fn role_template(role: AgentRole) -> String {
    let body = match role {
        AgentRole::Initial => INITIAL,
        AgentRole::Trust => TRUST,
        AgentRole::Skeptic => SKEPTIC,
        AgentRole::Leader => LEADER,
    };
    body.replace("{rubric}", RUBRIC)
}

fn check_arity(role: AgentRole, ctx: &PromptContext) -> Result<(), PersonaError> {
    let n = ctx.prior_opinions.len();
    let (ok, expected) = match role {
        AgentRole::Initial => (n == 0, "0"),
        AgentRole::Trust | AgentRole::Skeptic => (n >= 1, "at least 1"),
        AgentRole::Leader => {
            let roles: Vec<_> = ctx.prior_opinions.iter().map(|o| o.role).collect();
            let pair = roles.len() == 2 && roles.contains(&AgentRole::Trust) && roles.contains(&AgentRole::Skeptic);
            (pair, "exactly 2 (Trust and Skeptic)")
        }
    };
    if ok {
        Ok(())
    } else {
        Err(PersonaError::ContextMismatch {
            role,
            expected,
            found: n,
        })
    }
}

fn render_evidence(evidence: &[EvidenceSnippet], out: &mut String) {
    out.push_str("[evidences]:\n");
    if evidence.is_empty() {
        out.push_str("(no evidence was retrieved)\n");
    }
    for (i, e) in evidence.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, e.text));
    }
}

fn render_priors(role: AgentRole, priors: &[AgentOpinion], out: &mut String) {
    if priors.is_empty() {
        return;
    }
    out.push_str("\n[previous opinions]:\n");
    let single = priors.len() == 1 && role != AgentRole::Leader;
    for op in priors {
        if single {
            out.push_str("Here is the response from the previous agent:\n");
        } else {
            out.push_str(&format!("Here is the response from the {} agent:\n", op.role));
        }
        out.push_str(&serialize_opinion(op));
        out.push('\n');
    }
}

/// Renders the full prompt for `role`.
pub fn render_prompt(role: AgentRole, ctx: &PromptContext) -> Result<String, PersonaError> {
    check_arity(role, ctx)?;
    let mut out = role_template(role);
    out.push('\n');
    out.push_str(&format!("[text]: {}\n\n", ctx.claim_text));
    render_evidence(&ctx.evidence, &mut out);
    render_priors(role, &ctx.prior_opinions, &mut out);
    Ok(out)
}

pub fn repair_instruction(attempt: u32, failure: &ParseFailure) -> String {
    REPAIR
        .replace("{attempt}", &attempt.to_string())
        .replace("{reason}", &failure.to_string())
}

/// Render, complete and parse, reissuing with a repair instruction on
/// unparseable replies. Makes at most `1 + max_retries` completions.
pub fn elicit_opinion(
    role: AgentRole,
    ctx: &PromptContext,
    gateway: &Gateway,
    max_retries: u32,
) -> Result<AgentOpinion, PersonaError> {
    let prompt = render_prompt(role, ctx)?;
    let mut attempt_prompt = prompt.clone();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let reply = gateway.ask(attempt_prompt)?;
        match parse_opinion(&reply.text, role) {
            Ok(op) => return Ok(op),
            Err(failure) if attempts <= max_retries => {
                tracing::debug!(%role, attempts, %failure, "reissuing with repair instruction");
                attempt_prompt = format!("{prompt}\n{}", repair_instruction(attempts, &failure));
            }
            Err(failure) => {
                return Err(PersonaError::OpinionUnparseable {
                    role,
                    attempts,
                    last: failure,
                })
            }
        }
    }
}
