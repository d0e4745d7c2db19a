//! Claim detection: decomposing a response into atomic, checkable claims.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::{normalize_snippet, split_sentences};
use crate::gateway::{Gateway, GatewayError};
use crate::listing::first_string_list;
use crate::model::{Claim, ClaimId, ModelError, ResponseId, TaskKind};
use crate::personas::{CLAIMS_TEMPLATE, SUBJECTIVE_TEMPLATE};

/// Retries after a malformed claim list.
pub const CLAIM_RETRIES: u32 = 3;
/// Answers up to this many tokens, with no inner sentence break, are
/// verified as a question-answer pair instead of being decomposed.
pub const SIMPLE_ANSWER_TOKENS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClaimError {
    #[error("response text is empty")]
    EmptyResponse,
    #[error("{task:?} sample is missing its {field}")]
    MissingField { task: TaskKind, field: &'static str },
    #[error("response carries no verifiable content")]
    NoVerifiableContent,
    #[error("claim extraction failed after {attempts} attempt(s): {reason}")]
    MalformedClaims { attempts: u32, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A model response to verify, with the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseSample {
    pub response_id: ResponseId,
    pub task_kind: TaskKind,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_history: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provided_knowledge: Option<String>,
}

impl ResponseSample {
    pub fn new(response_id: impl Into<ResponseId>, task_kind: TaskKind, response_text: impl Into<String>) -> Self {
        Self {
            response_id: response_id.into(),
            task_kind,
            response_text: response_text.into(),
            question: None,
            dialogue_history: None,
            provided_knowledge: None,
        }
    }

    pub fn with_question(mut self, question: impl Into<String>) -> Self {
        self.question = Some(question.into());
        self
    }

    pub fn with_dialogue_history(mut self, history: impl Into<String>) -> Self {
        self.dialogue_history = Some(history.into());
        self
    }

    pub fn with_knowledge(mut self, knowledge: impl Into<String>) -> Self {
        self.provided_knowledge = Some(knowledge.into());
        self
    }

    fn required<'a>(&self, value: &'a Option<String>, field: &'static str) -> Result<&'a str, ClaimError> {
        value
            .as_deref()
            .filter(|v| !v.trim().is_empty())
            .ok_or(ClaimError::MissingField {
                task: self.task_kind,
                field,
            })
    }
}

pub fn claim_id(response_id: &ResponseId, n: usize) -> ClaimId {
    ClaimId::new(format!("{response_id}#c{n}"))
}

/// Question, one space, answer. Both are trimmed first and must be non-empty.
pub fn compose_qa_claim(
    id: ClaimId,
    source_response_id: ResponseId,
    question: &str,
    answer: &str,
) -> Result<Claim, ClaimError> {
    let (q, a) = (question.trim(), answer.trim());
    if q.is_empty() || a.is_empty() {
        return Err(ClaimError::Model(ModelError::EmptyText("question and answer")));
    }
    Ok(Claim::new(
        id,
        format!("{q} {a}"),
        source_response_id,
        TaskKind::Qa,
        Some(q.to_string()),
    )?)
}

/// Short entity-style answers: few tokens and no sentence break before the end.
pub fn is_simple_answer(answer: &str) -> bool {
    let answer = answer.trim();
    let tokens: Vec<&str> = answer.split_whitespace().collect();
    tokens.len() <= SIMPLE_ANSWER_TOKENS
        && tokens[..tokens.len().saturating_sub(1)]
            .iter()
            .all(|t| !t.trim_end_matches(['"', '\'', ')']).ends_with(['.', '!', '?']))
}

/// Removes purely subjective sentences; `None` when nothing factual remains.
pub fn strip_subjective(text: &str, gateway: &Gateway) -> Result<Option<String>, ClaimError> {
    if text.trim().is_empty() {
        return Err(ClaimError::EmptyResponse);
    }
    let reply = gateway.ask(SUBJECTIVE_TEMPLATE.replace("{input}", text))?.text;
    let kept = reply.trim();
    let kept = kept.strip_prefix("[response]:").unwrap_or(kept).trim();
    if kept.is_empty() || kept.trim_end_matches('.') == "None" {
        return Ok(None);
    }
    Ok(Some(kept.to_string()))
}

/// Asks the model for a claim list, retrying malformed replies.
pub fn decompose(text: &str, gateway: &Gateway) -> Result<Vec<String>, ClaimError> {
    let prompt = CLAIMS_TEMPLATE.replace("{input}", text);
    let mut attempt_prompt = prompt.clone();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let reply = gateway.ask(attempt_prompt)?;
        match first_string_list(&reply.text) {
            Ok(list) => {
                return Ok(list
                    .into_iter()
                    .map(|c| c.trim().to_string())
                    .filter(|c| !c.is_empty())
                    .collect())
            }
            Err(reason) if attempts <= CLAIM_RETRIES => {
                tracing::debug!(attempts, %reason, "reissuing claim extraction");
                attempt_prompt = format!(
                    "{prompt}\nYour previous reply (attempt {attempts}) was rejected: {reason}. Reply with a JSON list of strings only."
                );
            }
            Err(reason) => return Err(ClaimError::MalformedClaims { attempts, reason }),
        }
    }
}

fn removed_sentences(original: &str, kept: &str) -> HashSet<String> {
    let kept: HashSet<String> = split_sentences(kept)
        .iter()
        .map(|s| normalize_snippet(&s.text))
        .collect();
    split_sentences(original)
        .iter()
        .map(|s| normalize_snippet(&s.text))
        .filter(|s| !kept.contains(s))
        .collect()
}

/// Splits a response into claims according to its task.
pub fn extract_claims(sample: &ResponseSample, gateway: &Gateway) -> Result<Vec<Claim>, ClaimError> {
    let text = sample.response_text.trim();
    if text.is_empty() {
        return Err(ClaimError::EmptyResponse);
    }
    let rid = &sample.response_id;
    let build = |texts: Vec<String>, context: Option<&str>| -> Result<Vec<Claim>, ClaimError> {
        if texts.is_empty() {
            return Err(ClaimError::NoVerifiableContent);
        }
        texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                Ok(Claim::new(
                    claim_id(rid, i + 1),
                    t,
                    rid.clone(),
                    sample.task_kind,
                    context.map(str::to_string),
                )?)
            })
            .collect()
    };
    match sample.task_kind {
        TaskKind::Qa => {
            let question = sample.required(&sample.question, "question")?;
            if is_simple_answer(text) {
                return Ok(vec![compose_qa_claim(claim_id(rid, 1), rid.clone(), question, text)?]);
            }
            build(decompose(text, gateway)?, Some(question))
        }
        TaskKind::Summarization => build(decompose(text, gateway)?, None),
        TaskKind::Dialogue => {
            let history = sample.required(&sample.dialogue_history, "dialogue history")?;
            let Some(kept) = strip_subjective(text, gateway)? else {
                return Err(ClaimError::NoVerifiableContent);
            };
            let removed = removed_sentences(text, &kept);
            let claims: Vec<String> = decompose(&kept, gateway)?
                .into_iter()
                .filter(|c| !removed.contains(&normalize_snippet(c)))
                .collect();
            build(claims, Some(history))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Script, ScriptedBackend};
    use proptest::prelude::*;

    fn rid() -> ResponseId {
        ResponseId::new("r1")
    }

    #[test]
    fn short_qa_answer_is_composed_with_its_question() {
        let q = "What American quartery lifestyle magazine did Hearst Shkelev Media also publish?";
        let c = compose_qa_claim(claim_id(&rid(), 1), rid(), q, "Departures.").unwrap();
        assert_eq!(c.text, format!("{q} Departures."));
        assert_eq!(
            compose_qa_claim(claim_id(&rid(), 1), rid(), "Q?", "A").unwrap().text,
            "Q? A"
        );
        assert!(compose_qa_claim(claim_id(&rid(), 1), rid(), "", "A").is_err());
    }

    #[test]
    fn simple_answer_heuristic() {
        assert!(is_simple_answer("Departures."));
        assert!(is_simple_answer("Barack Obama"));
        assert!(!is_simple_answer("Paris. It is in France."));
        assert!(!is_simple_answer("one two three four five six seven eight nine"));
    }

    #[test]
    fn simple_qa_makes_no_call() {
        let gw = Gateway::scripted(Vec::<String>::new());
        let s = ResponseSample::new("r1", TaskKind::Qa, "Departures.").with_question("Which magazine?");
        let claims = extract_claims(&s, &gw).unwrap();
        assert_eq!(claims.len(), 1);
        assert_eq!(claims[0].id.as_str(), "r1#c1");
        assert_eq!(gw.provider_calls(), 0);
    }

    #[test]
    fn long_answer_is_decomposed() {
        let gw = Gateway::scripted([r#"["Marie Curie was born in Warsaw.", "Marie Curie won two Nobel Prizes."]"#]);
        let s = ResponseSample::new(
            "r1",
            TaskKind::Qa,
            "Marie Curie was born in Warsaw. She won two Nobel Prizes, in physics and chemistry.",
        )
        .with_question("Who was Marie Curie?");
        let claims = extract_claims(&s, &gw).unwrap();
        assert_eq!(claims.len(), 2);
        assert!(claims
            .iter()
            .all(|c| c.task_kind == TaskKind::Qa && c.source_response_id == rid()));
        assert_eq!(claims[1].id.as_str(), "r1#c2");
    }

    #[test]
    fn pleasantry_has_no_verifiable_content() {
        let gw = Gateway::scripted(["None"]);
        let s = ResponseSample::new(
            "r1",
            TaskKind::Dialogue,
            "My pleasure, let me know if you need more recommendations.",
        )
        .with_dialogue_history("[Human]: Thanks!");
        assert_eq!(extract_claims(&s, &gw).unwrap_err(), ClaimError::NoVerifiableContent);
    }

    #[test]
    fn strip_subjective_examples() {
        let gw = Gateway::scripted([
            "The last time that they made it to the Super Bowl was in 2005.",
            "The Fault in Our Stars is a fantasy novel.",
            "None",
        ]);
        assert_eq!(
            strip_subjective(
                "The last time that they made it to Super Bowl was in 2005. Are you a basketball fanatic too?",
                &gw
            )
            .unwrap()
            .as_deref(),
            Some("The last time that they made it to the Super Bowl was in 2005.")
        );
        assert_eq!(
            strip_subjective("The Fault in Our Stars is a fantasy novel. Have you read it?", &gw)
                .unwrap()
                .as_deref(),
            Some("The Fault in Our Stars is a fantasy novel.")
        );
        assert_eq!(strip_subjective("Have fun!", &gw).unwrap(), None);
    }

    #[test]
    fn empty_response_is_rejected() {
        let gw = Gateway::scripted(Vec::<String>::new());
        let s = ResponseSample::new("r1", TaskKind::Summarization, "   ");
        assert_eq!(extract_claims(&s, &gw).unwrap_err(), ClaimError::EmptyResponse);
    }

    #[test]
    fn dialogue_never_emits_removed_sentences() {
        // A decomposer that echoes a removed sentence back must not leak it.
        let script = Script::default()
            .rule(
                &["remove sentences"],
                "The Fault in Our Stars is a novel by John Green.",
            )
            .rule(
                &["extract every claim"],
                r#"["The Fault in Our Stars is a novel by John Green.", "Have you read it?"]"#,
            );
        let gw = Gateway::new(Box::new(ScriptedBackend::from_script(script)));
        let s = ResponseSample::new(
            "r1",
            TaskKind::Dialogue,
            "The Fault in Our Stars is a novel by John Green. Have you read it?",
        )
        .with_dialogue_history("[Human]: Any book tips?");
        let claims = extract_claims(&s, &gw).unwrap();
        assert_eq!(claims.len(), 1);
        assert_eq!(claims[0].text, "The Fault in Our Stars is a novel by John Green.");
    }

    #[test]
    fn malformed_lists_run_out_of_retries() {
        let gw = Gateway::scripted(["no", "still no", "nope", "{}"]);
        let s = ResponseSample::new("r1", TaskKind::Summarization, "A long summary. With sentences.");
        assert!(matches!(
            extract_claims(&s, &gw),
            Err(ClaimError::MalformedClaims { attempts: 4, .. })
        ));
    }

    proptest! {
        #[test]
        fn composition_is_length_additive(q in "[A-Za-z?]([A-Za-z ?]{0,30}[A-Za-z?])?", a in "[A-Za-z.]([A-Za-z .]{0,30}[A-Za-z.])?") {
            let c = compose_qa_claim(claim_id(&rid(), 1), rid(), &q, &a).unwrap();
            prop_assert_eq!(c.text.len(), q.len() + a.len() + 1);
            prop_assert!(!c.text.trim().is_empty());
        }
    }
}
