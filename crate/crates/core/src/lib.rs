//! Hallucination detection by claim decomposition, evidence retrieval and a
//! Markov-chain debate between Trust, Skeptic and Leader agents.
//!
//! Every model call goes through [`gateway::Gateway`], so the whole pipeline
//! runs offline against scripted or recorded completions.

pub mod claims;
pub mod debate;
pub mod eval;
pub mod evidence;
pub mod gateway;
mod listing;
pub mod model;
pub mod personas;
pub mod pipeline;

pub use claims::{extract_claims, ResponseSample};
pub use debate::run_debate;
pub use gateway::Gateway;
pub use model::{
    aggregate_response_verdict, AgentOpinion, AgentRole, Claim, ClaimVerdict, DebateConfig, DebateStateId,
    DebateTranscript, ErrorSeverity, EvidenceSnippet, ResponseVerdict, StateOutcome, StopReason, TaskKind,
    TransitionPolicy,
};
pub use pipeline::{ResponseOutcome, Verifier};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/gateway.md")]
    mod gateway {}
    #[doc = include_str!("../../../book/src/claims.md")]
    mod claims {}
    #[doc = include_str!("../../../book/src/evidence.md")]
    mod evidence {}
    #[doc = include_str!("../../../book/src/debate.md")]
    mod debate {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
