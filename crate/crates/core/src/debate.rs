//! The Markov-chain debate: an initial answer, then policy-chosen
//! three-agent states until consensus past the round floor or the cap.

use thiserror::Error;

use crate::gateway::Gateway;
use crate::model::{
    AgentOpinion, AgentRole, Claim, ClaimVerdict, DebateConfig, DebateStateId, DebateTranscript, EvidenceSnippet,
    ModelError, StateOutcome, StopReason, TransitionPolicy,
};
use crate::personas::{elicit_opinion, PersonaError, PromptContext, DEFAULT_OPINION_RETRIES};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DebateError {
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0} is not a three-agent debate state")]
    NotADebateState(DebateStateId),
    #[error("a debate state needs the previous state's final opinion")]
    NoCarriedOpinion,
}

/// Runs S0: one Initial opinion, judged against the evidence.
pub fn run_initial_state(
    claim: &Claim,
    evidence: &[EvidenceSnippet],
    gateway: &Gateway,
    opinion_retries: u32,
) -> Result<StateOutcome, DebateError> {
    if evidence.is_empty() {
        tracing::info!(claim = %claim.id, "no evidence retrieved; the initial agent judges on model knowledge");
    }
    let ctx = PromptContext::new(claim.text.clone(), evidence.to_vec(), Vec::new());
    let opinion = elicit_opinion(AgentRole::Initial, &ctx, gateway, opinion_retries)?;
    Ok(StateOutcome::from_opinions(DebateStateId::S0, vec![opinion])?)
}

pub fn next_state(policy: TransitionPolicy, judgment: bool) -> DebateStateId {
    policy.next_state(judgment)
}

/// Runs S1 or S2. The first speaker answers the carried opinion, the second
/// answers the first, and the Leader weighs both in speaking order.
pub fn run_debate_state(
    state: DebateStateId,
    claim: &Claim,
    evidence: &[EvidenceSnippet],
    carried: &AgentOpinion,
    gateway: &Gateway,
    opinion_retries: u32,
) -> Result<StateOutcome, DebateError> {
    let &[first_role, second_role, leader] = state.roles() else {
        return Err(DebateError::NotADebateState(state));
    };
    let ask = |role, priors: Vec<AgentOpinion>| {
        let ctx = PromptContext::new(claim.text.clone(), evidence.to_vec(), priors);
        elicit_opinion(role, &ctx, gateway, opinion_retries)
    };
    let first = ask(first_role, vec![carried.clone()])?;
    let second = ask(second_role, vec![first.clone()])?;
    let last = ask(leader, vec![first.clone(), second.clone()])?;
    Ok(StateOutcome::from_opinions(state, vec![first, second, last])?)
}

/// Unanimity of a three-agent state's factuality flags.
pub fn has_consensus(outcome: &StateOutcome) -> Result<bool, DebateError> {
    if outcome.state == DebateStateId::S0 {
        return Err(DebateError::NotADebateState(DebateStateId::S0));
    }
    let first = outcome.opinions.first().map(|o| o.factuality);
    Ok(outcome.opinions.iter().all(|o| Some(o.factuality) == first))
}

/// Full debate with the default opinion retry count.
pub fn run_debate(
    claim: &Claim,
    evidence: &[EvidenceSnippet],
    config: &DebateConfig,
    gateway: &Gateway,
) -> Result<ClaimVerdict, DebateError> {
    run_debate_with_retries(claim, evidence, config, gateway, DEFAULT_OPINION_RETRIES)
}

/// Makes at most `(1 + 3 * max_rounds) * (1 + opinion_retries)` completions.
pub fn run_debate_with_retries(
    claim: &Claim,
    evidence: &[EvidenceSnippet],
    config: &DebateConfig,
    gateway: &Gateway,
    opinion_retries: u32,
) -> Result<ClaimVerdict, DebateError> {
    config.validate()?;
    let initial = run_initial_state(claim, evidence, gateway, opinion_retries)?;
    let mut rounds: Vec<StateOutcome> = Vec::new();
    let stop_reason = loop {
        let previous = rounds.last().unwrap_or(&initial);
        let state = next_state(config.policy, previous.judgment);
        let outcome = run_debate_state(
            state,
            claim,
            evidence,
            previous.final_opinion(),
            gateway,
            opinion_retries,
        )?;
        let consensus = has_consensus(&outcome)?;
        rounds.push(outcome);
        tracing::debug!(claim = %claim.id, round = rounds.len(), %state, consensus, "debate state finished");
        if consensus && rounds.len() as u32 >= config.min_rounds {
            break StopReason::Consensus;
        }
        if rounds.len() as u32 == config.max_rounds {
            break StopReason::MaxRounds;
        }
    };
    let transcript = DebateTranscript {
        claim_id: claim.id.clone(),
        claim: claim.text.clone(),
        initial,
        rounds,
        stop_reason,
    };
    Ok(ClaimVerdict::from_transcript(
        claim.source_response_id.clone(),
        transcript,
    ))
}
