//! Shared domain types for the verification pipeline.
//!
//! Everything in here is a plain immutable value. The debate engine produces
//! [`DebateTranscript`]s, the transcript is folded into a [`ClaimVerdict`], and
//! claim verdicts of one response are folded into a [`ResponseVerdict`] by
//! [`aggregate_response_verdict`].

mod document;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use document::{parse_document, write_document, DocumentError, TranscriptDocument, DOCUMENT_FORMAT};
pub use validate::{validate_transcript, Violation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("no verifiable claims to aggregate")]
    EmptyClaimSet,
    #[error("claim verdicts belong to different responses ({0} and {1})")]
    MixedResponses(ResponseId, ResponseId),
    #[error("{0} must not be empty")]
    EmptyText(&'static str),
    #[error("error severity {0} outside 0..=5")]
    SeverityOutOfRange(i64),
    #[error("{state} expects roles {expected}, got {found}")]
    RoleOrder {
        state: DebateStateId,
        expected: String,
        found: String,
    },
    #[error("evidence ranks must be unique and contiguous from 1 (position {position} has rank {rank})")]
    EvidenceRanks { position: usize, rank: u32 },
    #[error("invalid debate config: {0}")]
    InvalidConfig(String),
    #[error("unknown {kind} `{value}`")]
    UnknownVariant { kind: &'static str, value: String },
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(ClaimId);
string_id!(ResponseId);

/// The generative task a response came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Qa,
    Summarization,
    Dialogue,
}

/// An atomic verifiable statement extracted from a model response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub id: ClaimId,
    pub text: String,
    pub source_response_id: ResponseId,
    pub task_kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

impl Claim {
    pub fn new(
        id: impl Into<ClaimId>,
        text: impl Into<String>,
        source_response_id: impl Into<ResponseId>,
        task_kind: TaskKind,
        context: Option<String>,
    ) -> Result<Self, ModelError> {
        let text = text.into().trim().to_string();
        if text.is_empty() {
            return Err(ModelError::EmptyText("claim text"));
        }
        Ok(Self {
            id: id.into(),
            text,
            source_response_id: source_response_id.into(),
            task_kind,
            context,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceSource {
    WebSearch,
    ProvidedKnowledge,
    LocalRanked,
}

/// One retrieved passage handed to the agents as grounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSnippet {
    pub text: String,
    pub source: EvidenceSource,
    pub rank: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_ref: Option<String>,
}

/// Checks that an evidence set has non-empty texts and ranks `1..=n` in order.
pub fn check_evidence_set(snippets: &[EvidenceSnippet]) -> Result<(), ModelError> {
    for (position, snippet) in snippets.iter().enumerate() {
        if snippet.text.trim().is_empty() {
            return Err(ModelError::EmptyText("evidence text"));
        }
        if snippet.rank as usize != position + 1 {
            return Err(ModelError::EvidenceRanks {
                position,
                rank: snippet.rank,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Initial,
    Trust,
    Skeptic,
    Leader,
}

impl AgentRole {
    pub const ALL: [AgentRole; 4] = [
        AgentRole::Initial,
        AgentRole::Trust,
        AgentRole::Skeptic,
        AgentRole::Leader,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentRole::Initial => "Initial",
            AgentRole::Trust => "Trust",
            AgentRole::Skeptic => "Skeptic",
            AgentRole::Leader => "Leader",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Error severity grade, 0 (no error) through 5 (fabricated claim).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct ErrorSeverity(u8);

impl ErrorSeverity {
    pub const NONE: ErrorSeverity = ErrorSeverity(0);
    pub const MAX: u8 = 5;

    pub fn new(grade: i64) -> Result<Self, ModelError> {
        if (0..=Self::MAX as i64).contains(&grade) {
            Ok(Self(grade as u8))
        } else {
            Err(ModelError::SeverityOutOfRange(grade))
        }
    }

    pub fn grade(self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for ErrorSeverity {
    type Error = ModelError;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ErrorSeverity> for u8 {
    fn from(s: ErrorSeverity) -> u8 {
        s.0
    }
}

impl fmt::Display for ErrorSeverity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One agent's structured verdict on a claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOpinion {
    pub role: AgentRole,
    pub opinion: String,
    pub factuality: bool,
    pub severity: ErrorSeverity,
}

impl AgentOpinion {
    pub fn new(
        role: AgentRole,
        opinion: impl Into<String>,
        factuality: bool,
        severity: ErrorSeverity,
    ) -> Result<Self, ModelError> {
        let opinion = opinion.into();
        if opinion.trim().is_empty() {
            return Err(ModelError::EmptyText("opinion"));
        }
        Ok(Self {
            role,
            opinion,
            factuality,
            severity,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DebateStateId {
    S0,
    S1,
    S2,
}

impl DebateStateId {
    /// Speaking order of the agents that make up this state.
    pub fn roles(self) -> &'static [AgentRole] {
        match self {
            DebateStateId::S0 => &[AgentRole::Initial],
            DebateStateId::S1 => &[AgentRole::Trust, AgentRole::Skeptic, AgentRole::Leader],
            DebateStateId::S2 => &[AgentRole::Skeptic, AgentRole::Trust, AgentRole::Leader],
        }
    }
}

impl fmt::Display for DebateStateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DebateStateId::S0 => "S0",
            DebateStateId::S1 => "S1",
            DebateStateId::S2 => "S2",
        })
    }
}

fn role_list(roles: impl Iterator<Item = AgentRole>) -> String {
    roles.map(AgentRole::name).collect::<Vec<_>>().join("-")
}

/// The result of executing one debate state.
///
/// `judgment` is the factuality of the state's final speaker (Initial in S0,
/// Leader otherwise). `consensus` only exists for three-agent states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateOutcome {
    pub state: DebateStateId,
    pub opinions: Vec<AgentOpinion>,
    pub judgment: bool,
    pub consensus: bool,
}

impl StateOutcome {
    pub fn from_opinions(state: DebateStateId, opinions: Vec<AgentOpinion>) -> Result<Self, ModelError> {
        let expected = state.roles();
        if opinions.len() != expected.len() || opinions.iter().zip(expected).any(|(o, r)| o.role != *r) {
            return Err(ModelError::RoleOrder {
                state,
                expected: role_list(expected.iter().copied()),
                found: role_list(opinions.iter().map(|o| o.role)),
            });
        }
        let judgment = opinions.last().map(|o| o.factuality).unwrap_or_default();
        let consensus = state != DebateStateId::S0 && opinions.iter().all(|o| o.factuality == opinions[0].factuality);
        Ok(Self {
            state,
            opinions,
            judgment,
            consensus,
        })
    }

    /// The opinion carried into the next state.
    pub fn final_opinion(&self) -> &AgentOpinion {
        self.opinions
            .last()
            .expect("state outcomes always hold at least one opinion")
    }
}

/// Rule mapping a state's judgment to the identity of the next state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionPolicy {
    /// A factual judgment is challenged by a Skeptic-led state, otherwise Trust leads.
    #[default]
    TrueToSkeptic,
    /// A factual judgment is reinforced by a Trust-led state, otherwise Skeptic leads.
    TrueToTrust,
    AlwaysSkeptic,
    AlwaysTrust,
}

impl TransitionPolicy {
    pub const ALL: [TransitionPolicy; 4] = [
        TransitionPolicy::TrueToSkeptic,
        TransitionPolicy::TrueToTrust,
        TransitionPolicy::AlwaysSkeptic,
        TransitionPolicy::AlwaysTrust,
    ];

    /// Deterministic transition table. Never returns `S0`.
    pub fn next_state(self, judgment: bool) -> DebateStateId {
        use DebateStateId::{S1, S2};
        match (self, judgment) {
            (TransitionPolicy::TrueToSkeptic, true) => S2,
            (TransitionPolicy::TrueToSkeptic, false) => S1,
            (TransitionPolicy::TrueToTrust, true) => S1,
            (TransitionPolicy::TrueToTrust, false) => S2,
            (TransitionPolicy::AlwaysSkeptic, _) => S2,
            (TransitionPolicy::AlwaysTrust, _) => S1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransitionPolicy::TrueToSkeptic => "true-to-skeptic",
            TransitionPolicy::TrueToTrust => "true-to-trust",
            TransitionPolicy::AlwaysSkeptic => "always-skeptic",
            TransitionPolicy::AlwaysTrust => "always-trust",
        }
    }
}

impl fmt::Display for TransitionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransitionPolicy {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ModelError::UnknownVariant {
                kind: "transition policy",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateConfig {
    pub policy: TransitionPolicy,
    pub min_rounds: u32,
    pub max_rounds: u32,
    pub evidence_k: usize,
}

impl Default for DebateConfig {
    fn default() -> Self {
        Self {
            policy: TransitionPolicy::TrueToSkeptic,
            min_rounds: 2,
            max_rounds: 5,
            evidence_k: 10,
        }
    }
}

impl DebateConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.max_rounds == 0 {
            return Err(ModelError::InvalidConfig("max_rounds must be positive".into()));
        }
        if self.min_rounds > self.max_rounds {
            return Err(ModelError::InvalidConfig(format!(
                "min_rounds ({}) exceeds max_rounds ({})",
                self.min_rounds, self.max_rounds
            )));
        }
        if self.evidence_k == 0 {
            return Err(ModelError::InvalidConfig("evidence_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Consensus,
    MaxRounds,
}

/// Replayable record of one claim's debate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub claim_id: ClaimId,
    pub claim: String,
    pub initial: StateOutcome,
    pub rounds: Vec<StateOutcome>,
    pub stop_reason: StopReason,
}

impl DebateTranscript {
    /// Last executed state: the final round, or the initial state when no round ran.
    pub fn final_outcome(&self) -> &StateOutcome {
        self.rounds.last().unwrap_or(&self.initial)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimVerdict {
    pub claim_id: ClaimId,
    pub source_response_id: ResponseId,
    pub factual: bool,
    pub severity: ErrorSeverity,
    pub transcript: DebateTranscript,
}

impl ClaimVerdict {
    /// Verdict taken from the final state: its judgment and its last speaker's severity.
    pub fn from_transcript(source_response_id: ResponseId, transcript: DebateTranscript) -> Self {
        let last = transcript.final_outcome();
        Self {
            claim_id: transcript.claim_id.clone(),
            source_response_id,
            factual: last.judgment,
            severity: last.final_opinion().severity,
            transcript,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseVerdict {
    pub response_id: ResponseId,
    pub factual: bool,
    pub claim_verdicts: Vec<ClaimVerdict>,
}

/// A response is factual only when every one of its claims is.
pub fn aggregate_response_verdict(claim_verdicts: Vec<ClaimVerdict>) -> Result<ResponseVerdict, ModelError> {
    let first = claim_verdicts.first().ok_or(ModelError::EmptyClaimSet)?;
    let response_id = first.source_response_id.clone();
    if let Some(other) = claim_verdicts.iter().find(|v| v.source_response_id != response_id) {
        return Err(ModelError::MixedResponses(
            response_id,
            other.source_response_id.clone(),
        ));
    }
    let factual = claim_verdicts.iter().all(|v| v.factual);
    Ok(ResponseVerdict {
        response_id,
        factual,
        claim_verdicts,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn opinion(role: AgentRole, factuality: bool, severity: i64) -> AgentOpinion {
        AgentOpinion::new(
            role,
            format!("{role} says {factuality}"),
            factuality,
            ErrorSeverity::new(severity).unwrap(),
        )
        .unwrap()
    }

    pub(crate) fn outcome(state: DebateStateId, facts: &[bool]) -> StateOutcome {
        let ops = state
            .roles()
            .iter()
            .zip(facts)
            .map(|(r, f)| opinion(*r, *f, if *f { 0 } else { 3 }))
            .collect();
        StateOutcome::from_opinions(state, ops).unwrap()
    }

    pub(crate) fn verdict(response: &str, claim: &str, factual: bool) -> ClaimVerdict {
        let initial = outcome(DebateStateId::S0, &[factual]);
        let round = outcome(
            TransitionPolicy::TrueToSkeptic.next_state(factual),
            &[factual, factual, factual],
        );
        let transcript = DebateTranscript {
            claim_id: claim.into(),
            claim: format!("claim {claim}"),
            initial,
            rounds: vec![round],
            stop_reason: StopReason::Consensus,
        };
        ClaimVerdict::from_transcript(response.into(), transcript)
    }

    #[test]
    fn all_true_aggregates_to_factual() {
        let v = aggregate_response_verdict(vec![verdict("r", "a", true), verdict("r", "b", true)]).unwrap();
        assert!(v.factual);
    }

    #[test]
    fn one_hallucinated_claim_taints_the_response() {
        let v = aggregate_response_verdict(vec![
            verdict("r", "a", true),
            verdict("r", "b", false),
            verdict("r", "c", true),
        ])
        .unwrap();
        assert!(!v.factual);
        let ids: Vec<_> = v.claim_verdicts.iter().map(|c| c.claim_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn empty_claim_set_is_an_error() {
        assert_eq!(aggregate_response_verdict(vec![]), Err(ModelError::EmptyClaimSet));
    }

    #[test]
    fn mixed_responses_are_rejected() {
        let err = aggregate_response_verdict(vec![verdict("r1", "a", true), verdict("r2", "b", true)]).unwrap_err();
        assert!(matches!(err, ModelError::MixedResponses(..)));
    }

    #[test]
    fn severity_bounds() {
        assert!(ErrorSeverity::new(0).is_ok());
        assert!(ErrorSeverity::new(5).is_ok());
        assert_eq!(ErrorSeverity::new(6), Err(ModelError::SeverityOutOfRange(6)));
        assert_eq!(ErrorSeverity::new(-1), Err(ModelError::SeverityOutOfRange(-1)));
        assert!(serde_json::from_str::<ErrorSeverity>("9").is_err());
    }

    #[test]
    fn claim_text_is_trimmed_and_required() {
        let c = Claim::new("c1", "  Paris is in France. ", "r", TaskKind::Qa, None).unwrap();
        assert_eq!(c.text, "Paris is in France.");
        assert!(Claim::new("c1", "   ", "r", TaskKind::Qa, None).is_err());
    }

    #[test]
    fn outcome_rejects_wrong_role_order() {
        let ops = vec![
            opinion(AgentRole::Trust, true, 0),
            opinion(AgentRole::Skeptic, true, 0),
            opinion(AgentRole::Leader, true, 0),
        ];
        assert!(StateOutcome::from_opinions(DebateStateId::S2, ops.clone()).is_err());
        let s1 = StateOutcome::from_opinions(DebateStateId::S1, ops).unwrap();
        assert!(s1.consensus && s1.judgment);
    }

    #[test]
    fn s0_never_has_consensus() {
        let s0 = outcome(DebateStateId::S0, &[true]);
        assert!(!s0.consensus);
        assert!(s0.judgment);
    }

    #[test]
    fn evidence_ranks_must_be_contiguous() {
        let mk = |rank| EvidenceSnippet {
            text: "x".into(),
            source: EvidenceSource::WebSearch,
            rank,
            origin_ref: None,
        };
        assert!(check_evidence_set(&[mk(1), mk(2)]).is_ok());
        assert!(check_evidence_set(&[mk(1), mk(3)]).is_err());
        assert!(check_evidence_set(&[mk(0)]).is_err());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in TransitionPolicy::ALL {
            assert_eq!(p.as_str().parse::<TransitionPolicy>().unwrap(), p);
        }
        assert!("sometimes".parse::<TransitionPolicy>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DebateConfig::default().validate().is_ok());
        let bad = DebateConfig {
            min_rounds: 6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let zero = DebateConfig {
            max_rounds: 0,
            min_rounds: 0,
            ..Default::default()
        };
        assert!(zero.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn aggregation_is_permutation_invariant(flags in proptest::collection::vec(proptest::bool::ANY, 1..20), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let verdicts: Vec<_> = flags.iter().enumerate().map(|(i, f)| verdict("r", &i.to_string(), *f)).collect();
            let mut shuffled = verdicts.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = aggregate_response_verdict(verdicts.clone()).unwrap();
            let b = aggregate_response_verdict(shuffled.clone()).unwrap();
            proptest::prop_assert_eq!(a.factual, b.factual);
            proptest::prop_assert_eq!(a.factual, flags.iter().all(|f| *f));
            proptest::prop_assert_eq!(b.claim_verdicts, shuffled);
        }
    }
}
