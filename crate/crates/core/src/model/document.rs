//! Canonical transcript document: one pretty-printed JSON object per response.
//!
//! `write_document(parse_document(doc)) == doc` for every document this
//! module writes, byte for byte.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ClaimVerdict, ResponseId, ResponseVerdict, StateOutcome};

pub const DOCUMENT_FORMAT: &str = "factdebate.transcript/1";

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("malformed transcript document: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("unsupported document format `{0}`")]
    Format(String),
    #[error("inconsistent transcript document: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptDocument {
    pub format: String,
    pub template_version: String,
    pub response_id: ResponseId,
    pub factual: bool,
    pub claims: Vec<ClaimVerdict>,
}

impl TranscriptDocument {
    pub fn new(verdict: ResponseVerdict, template_version: &str) -> Self {
        Self {
            format: DOCUMENT_FORMAT.to_string(),
            template_version: template_version.to_string(),
            response_id: verdict.response_id,
            factual: verdict.factual,
            claims: verdict.claim_verdicts,
        }
    }

    pub fn into_verdict(self) -> ResponseVerdict {
        ResponseVerdict {
            response_id: self.response_id,
            factual: self.factual,
            claim_verdicts: self.claims,
        }
    }

    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents always serialize");
        s.push('\n');
        s
    }
}

pub fn write_document(verdict: &ResponseVerdict, template_version: &str) -> String {
    TranscriptDocument::new(verdict.clone(), template_version).render()
}

fn check_outcome(claim: &str, outcome: &StateOutcome) -> Result<(), DocumentError> {
    let rebuilt = StateOutcome::from_opinions(outcome.state, outcome.opinions.clone())
        .map_err(|e| DocumentError::Inconsistent(format!("claim {claim}: {e}")))?;
    if rebuilt != *outcome {
        return Err(DocumentError::Inconsistent(format!(
            "claim {claim}: {} judgment or consensus flag disagrees with its opinions",
            outcome.state
        )));
    }
    Ok(())
}

pub fn parse_document(text: &str) -> Result<TranscriptDocument, DocumentError> {
    let doc: TranscriptDocument = serde_json::from_str(text)?;
    if doc.format != DOCUMENT_FORMAT {
        return Err(DocumentError::Format(doc.format));
    }
    for claim in &doc.claims {
        let id = claim.claim_id.as_str();
        check_outcome(id, &claim.transcript.initial)?;
        for round in &claim.transcript.rounds {
            check_outcome(id, round)?;
        }
        if claim.transcript.claim_id != claim.claim_id {
            return Err(DocumentError::Inconsistent(format!(
                "claim {id}: transcript claim_id differs"
            )));
        }
        if claim.factual != claim.transcript.final_outcome().judgment {
            return Err(DocumentError::Inconsistent(format!(
                "claim {id}: verdict disagrees with the final state's judgment"
            )));
        }
    }
    if doc.factual != doc.claims.iter().all(|c| c.factual) {
        return Err(DocumentError::Inconsistent(
            "response factual flag is not the conjunction of its claims".into(),
        ));
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::aggregate_response_verdict;
    use crate::model::tests::verdict;

    #[test]
    fn document_round_trips_byte_for_byte() {
        let v =
            aggregate_response_verdict(vec![verdict("resp-1", "c1", true), verdict("resp-1", "c2", false)]).unwrap();
        let doc = write_document(&v, "v1");
        let parsed = parse_document(&doc).unwrap();
        assert_eq!(parsed.render(), doc);
        assert_eq!(parsed.into_verdict(), v);
        for key in [
            "\"claim_id\"",
            "\"state\"",
            "\"role\"",
            "\"opinion\"",
            "\"factuality\"",
            "\"severity\"",
            "\"stop_reason\"",
        ] {
            assert!(doc.contains(key), "missing {key}");
        }
    }

    #[test]
    fn tampered_document_is_rejected() {
        let v = aggregate_response_verdict(vec![verdict("resp-1", "c1", false)]).unwrap();
        let doc = write_document(&v, "v1").replacen("\"factual\": false", "\"factual\": true", 1);
        assert!(matches!(parse_document(&doc), Err(DocumentError::Inconsistent(_))));
    }

    #[test]
    fn wrong_format_tag_is_rejected() {
        let v = aggregate_response_verdict(vec![verdict("r", "c1", true)]).unwrap();
        let doc = write_document(&v, "v1").replace(DOCUMENT_FORMAT, "other/2");
        assert!(matches!(parse_document(&doc), Err(DocumentError::Format(_))));
    }
}
