//! Evidence retrieval: query generation, web search and local ranking.

mod search;
mod text;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};
use crate::listing::first_string_list;
use crate::model::{Claim, ClaimId};
use crate::personas::QUERIES_TEMPLATE;

pub use search::{
    fetch_web_evidence, normalize_snippet, FixtureSearch, SearchDescriptor, SearchHit, SearchKind, SearchProvider,
    WebSearch,
};
pub use text::{lexical_score, rank_local_evidence, split_sentences, tokenize, Sentence, SentenceScorer, TfCosine};

pub const DEFAULT_EVIDENCE_K: usize = 10;
/// Snippets longer than this are cut before prompt assembly.
pub const SNIPPET_CHAR_LIMIT: usize = 1000;
/// Provided knowledge shorter than this is used whole as one snippet.
pub const DIRECT_KNOWLEDGE_CHARS: usize = 4000;
/// Retries after a malformed query list.
pub const QUERY_RETRIES: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvidenceError {
    #[error("query generation failed after {attempts} attempt(s): {reason}")]
    MalformedQueries { attempts: u32, reason: String },
    #[error("search provider: {0}")]
    Provider(String),
    #[error("search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySet {
    pub claim_id: ClaimId,
    queries: [String; 2],
}

impl QuerySet {
    pub fn new(claim_id: ClaimId, first: impl Into<String>, second: impl Into<String>) -> Result<Self, EvidenceError> {
        let queries = [first.into().trim().to_string(), second.into().trim().to_string()];
        if queries.iter().any(String::is_empty) {
            return Err(EvidenceError::MalformedQueries {
                attempts: 0,
                reason: "empty query".into(),
            });
        }
        Ok(Self { claim_id, queries })
    }

    pub fn queries(&self) -> &[String; 2] {
        &self.queries
    }
}

fn parse_queries(raw: &str) -> Result<(String, String), String> {
    let list = first_string_list(raw)?;
    if list.len() != 2 {
        return Err(format!("expected exactly 2 queries, got {}", list.len()));
    }
    let mut it = list.into_iter().map(|q| q.trim().to_string());
    let (a, b) = (it.next().unwrap_or_default(), it.next().unwrap_or_default());
    if a.is_empty() || b.is_empty() {
        return Err("empty query".into());
    }
    Ok((a, b))
}

/// Asks the model for two search queries, retrying malformed lists.
pub fn generate_queries(claim: &Claim, gateway: &Gateway) -> Result<QuerySet, EvidenceError> {
    let prompt = QUERIES_TEMPLATE.replace("{input}", &claim.text);
    let mut attempt_prompt = prompt.clone();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let reply = gateway.ask(attempt_prompt)?;
        match parse_queries(&reply.text) {
            Ok((a, b)) => return QuerySet::new(claim.id.clone(), a, b),
            Err(reason) if attempts <= QUERY_RETRIES => {
                tracing::debug!(claim = %claim.id, attempts, %reason, "reissuing query generation");
                attempt_prompt = format!(
                    "{prompt}\nYour previous reply (attempt {attempts}) was rejected: {reason}. Reply with a JSON list of exactly two strings."
                );
            }
            Err(reason) => return Err(EvidenceError::MalformedQueries { attempts, reason }),
        }
    }
}

/// Cuts `text` to at most `limit` characters.
pub fn truncate_chars(text: &str, limit: usize) -> &str {
    match text.char_indices().nth(limit) {
        Some((at, _)) => &text[..at],
        None => text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Script, ScriptedBackend};
    use crate::model::TaskKind;

    fn claim(text: &str) -> Claim {
        Claim::new("r#c1", text, "r", TaskKind::Qa, None).unwrap()
    }

    #[test]
    fn two_element_reply_passes_through() {
        let gw = Gateway::scripted([r#"["q1","q2"]"#]);
        let qs = generate_queries(&claim("c"), &gw).unwrap();
        assert_eq!(qs.queries(), &["q1".to_string(), "q2".to_string()]);
    }

    #[test]
    fn landseer_queries_mention_the_subject() {
        let gw =
            Gateway::scripted([r#"["Landseer dog breed coat colors", "Landseer Newfoundland black and white coat"]"#]);
        let qs = generate_queries(&claim("The Landseer is a dog breed with a black and white coat."), &gw).unwrap();
        let [a, b] = qs.queries();
        assert_ne!(a, b);
        assert!(a.contains("Landseer") && b.contains("Landseer"));
    }

    #[test]
    fn wrong_arity_exhausts_retries() {
        let script = Script::default().rule(&["[claim]"], r#"["a","b","c"]"#);
        let backend = ScriptedBackend::from_script(script);
        let gw = Gateway::new(Box::new(backend));
        let err = generate_queries(&claim("c"), &gw).unwrap_err();
        assert!(matches!(err, EvidenceError::MalformedQueries { attempts: 4, .. }));
        assert_eq!(gw.provider_calls(), 4);
    }

    #[test]
    fn malformed_then_valid() {
        let gw = Gateway::scripted(["I think", r#"["a", "b"]"#]);
        assert!(generate_queries(&claim("c"), &gw).is_ok());
        assert_eq!(gw.provider_calls(), 2);
    }

    #[test]
    fn truncation_counts_characters() {
        assert_eq!(truncate_chars("héllo", 2), "hé");
        assert_eq!(truncate_chars("abc", 10), "abc");
    }
}
