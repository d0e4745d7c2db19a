use std::fmt;

use super::{AgentRole, DebateConfig, DebateStateId, DebateTranscript, StateOutcome, StopReason};

/// A structural problem found in a transcript. Rounds are numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    InitialNotS0(DebateStateId),
    RoundIsS0 {
        round: usize,
    },
    RoleOrder {
        round: usize,
        state: DebateStateId,
        found: Vec<AgentRole>,
    },
    JudgmentMismatch {
        round: usize,
    },
    ConsensusMismatch {
        round: usize,
    },
    WrongState {
        round: usize,
        expected: DebateStateId,
        found: DebateStateId,
    },
    TooManyRounds {
        rounds: usize,
        max: u32,
    },
    ConsensusWithoutAgreement,
    ConsensusBeforeMinimum {
        rounds: usize,
        min: u32,
    },
    MaxRoundsNotReached {
        rounds: usize,
        max: u32,
    },
    MissedConsensusStop {
        round: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InitialNotS0(s) => write!(f, "initial state must be S0, got {s}"),
            Violation::RoundIsS0 { round } => write!(f, "round {round} must not be S0"),
            Violation::RoleOrder { round, state, found } => {
                let found: Vec<_> = found.iter().map(|r| r.name()).collect();
                let expected: Vec<_> = state.roles().iter().map(|r| r.name()).collect();
                write!(
                    f,
                    "round {round} ({state}) must speak in order {}, got {}",
                    expected.join("-"),
                    found.join("-")
                )
            }
            Violation::JudgmentMismatch { round } => {
                write!(f, "round {round} judgment differs from its final opinion")
            }
            Violation::ConsensusMismatch { round } => {
                write!(f, "round {round} consensus flag disagrees with its opinions")
            }
            Violation::WrongState { round, expected, .. } => {
                write!(f, "round {round} must be {expected}")
            }
            Violation::TooManyRounds { rounds, max } => {
                write!(f, "{rounds} rounds exceed max_rounds {max}")
            }
            Violation::ConsensusWithoutAgreement => {
                write!(f, "stop_reason is consensus but the final round is not unanimous")
            }
            Violation::ConsensusBeforeMinimum { rounds, min } => {
                write!(f, "consensus stop after {rounds} rounds, before min_rounds {min}")
            }
            Violation::MaxRoundsNotReached { rounds, max } => {
                write!(f, "stop_reason is max_rounds but only {rounds} of {max} rounds ran")
            }
            Violation::MissedConsensusStop { round } => {
                write!(
                    f,
                    "round {round} reached an admissible consensus but the debate continued"
                )
            }
        }
    }
}

fn check_outcome(round: usize, outcome: &StateOutcome, out: &mut Vec<Violation>) {
    let roles: Vec<AgentRole> = outcome.opinions.iter().map(|o| o.role).collect();
    if roles.as_slice() != outcome.state.roles() {
        out.push(Violation::RoleOrder {
            round,
            state: outcome.state,
            found: roles,
        });
    }
    if let Some(last) = outcome.opinions.last() {
        if last.factuality != outcome.judgment {
            out.push(Violation::JudgmentMismatch { round });
        }
    }
    let unanimous = outcome.state != DebateStateId::S0
        && !outcome.opinions.is_empty()
        && outcome
            .opinions
            .iter()
            .all(|o| o.factuality == outcome.opinions[0].factuality);
    if unanimous != outcome.consensus {
        out.push(Violation::ConsensusMismatch { round });
    }
}

/// Reports every structural invariant the transcript breaks under `config`.
///
/// An empty result means the transcript could have been produced by the
/// debate engine with this configuration.
pub fn validate_transcript(transcript: &DebateTranscript, config: &DebateConfig) -> Vec<Violation> {
    let mut out = Vec::new();

    if transcript.initial.state != DebateStateId::S0 {
        out.push(Violation::InitialNotS0(transcript.initial.state));
    }
    check_outcome(0, &transcript.initial, &mut out);

    let rounds = &transcript.rounds;
    if rounds.len() > config.max_rounds as usize {
        out.push(Violation::TooManyRounds {
            rounds: rounds.len(),
            max: config.max_rounds,
        });
    }

    let mut previous = transcript.initial.judgment;
    for (i, outcome) in rounds.iter().enumerate() {
        let round = i + 1;
        if outcome.state == DebateStateId::S0 {
            out.push(Violation::RoundIsS0 { round });
        }
        check_outcome(round, outcome, &mut out);
        let expected = config.policy.next_state(previous);
        if outcome.state != expected {
            out.push(Violation::WrongState {
                round,
                expected,
                found: outcome.state,
            });
        }
        if round < rounds.len() && outcome.consensus && round >= config.min_rounds as usize {
            out.push(Violation::MissedConsensusStop { round });
        }
        previous = outcome.judgment;
    }

    let last_consensus = rounds.last().map(|o| o.consensus).unwrap_or(false);
    match transcript.stop_reason {
        StopReason::Consensus => {
            if !last_consensus {
                out.push(Violation::ConsensusWithoutAgreement);
            }
            if rounds.len() < config.min_rounds as usize {
                out.push(Violation::ConsensusBeforeMinimum {
                    rounds: rounds.len(),
                    min: config.min_rounds,
                });
            }
        }
        StopReason::MaxRounds => {
            if rounds.len() != config.max_rounds as usize {
                out.push(Violation::MaxRoundsNotReached {
                    rounds: rounds.len(),
                    max: config.max_rounds,
                });
            }
            if last_consensus && rounds.len() >= config.min_rounds as usize {
                out.push(Violation::MissedConsensusStop { round: rounds.len() });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::outcome;
    use crate::model::TransitionPolicy;

    fn worked_example_like() -> DebateTranscript {
        DebateTranscript {
            claim_id: "c1".into(),
            claim: "claim".into(),
            initial: outcome(DebateStateId::S0, &[true]),
            rounds: vec![outcome(DebateStateId::S2, &[false, false, false])],
            stop_reason: StopReason::Consensus,
        }
    }

    fn cfg(policy: TransitionPolicy, min_rounds: u32, max_rounds: u32) -> DebateConfig {
        DebateConfig {
            policy,
            min_rounds,
            max_rounds,
            evidence_k: 10,
        }
    }

    #[test]
    fn worked_example_shape_is_valid_under_true_to_skeptic() {
        let v = validate_transcript(&worked_example_like(), &cfg(TransitionPolicy::TrueToSkeptic, 1, 5));
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn always_trust_rejects_a_skeptic_round() {
        let v = validate_transcript(&worked_example_like(), &cfg(TransitionPolicy::AlwaysTrust, 1, 5));
        let messages: Vec<String> = v.iter().map(ToString::to_string).collect();
        assert!(messages.contains(&"round 1 must be S1".to_string()), "{messages:?}");
    }

    #[test]
    fn too_many_rounds_is_reported() {
        let mut t = worked_example_like();
        t.rounds.insert(0, outcome(DebateStateId::S2, &[true, false, true]));
        let v = validate_transcript(&t, &cfg(TransitionPolicy::TrueToSkeptic, 1, 1));
        assert!(v.iter().any(|x| matches!(x, Violation::TooManyRounds { .. })));
    }

    #[test]
    fn consensus_before_minimum_is_reported() {
        let v = validate_transcript(&worked_example_like(), &cfg(TransitionPolicy::TrueToSkeptic, 2, 5));
        assert!(v.contains(&Violation::ConsensusBeforeMinimum { rounds: 1, min: 2 }));
    }

    #[test]
    fn max_rounds_requires_the_cap() {
        let mut t = worked_example_like();
        t.rounds = vec![outcome(DebateStateId::S2, &[true, false, false])];
        t.stop_reason = StopReason::MaxRounds;
        let v = validate_transcript(&t, &cfg(TransitionPolicy::TrueToSkeptic, 1, 3));
        assert_eq!(v, vec![Violation::MaxRoundsNotReached { rounds: 1, max: 3 }]);
    }

    #[test]
    fn tampered_flags_are_caught() {
        let mut t = worked_example_like();
        t.rounds[0].judgment = true;
        t.rounds[0].consensus = false;
        let v = validate_transcript(&t, &cfg(TransitionPolicy::TrueToSkeptic, 1, 5));
        assert!(v.contains(&Violation::JudgmentMismatch { round: 1 }));
        assert!(v.contains(&Violation::ConsensusMismatch { round: 1 }));
    }

    #[test]
    fn role_order_violation_in_round() {
        let mut t = worked_example_like();
        t.rounds[0].opinions.swap(0, 1);
        let v = validate_transcript(&t, &cfg(TransitionPolicy::TrueToSkeptic, 1, 5));
        assert!(v.iter().any(|x| matches!(x, Violation::RoleOrder { round: 1, .. })));
    }
}
