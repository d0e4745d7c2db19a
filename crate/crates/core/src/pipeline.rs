//! End-to-end verification of one response: detection, retrieval, debate,
//! aggregation. A failure on one claim marks that claim unverifiable and
//! never aborts the others.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::{extract_claims, ClaimError, ResponseSample};
use crate::debate::{run_debate_with_retries, DebateError};
use crate::evidence::{
    fetch_web_evidence, generate_queries, rank_local_evidence, split_sentences, truncate_chars, EvidenceError,
    SearchProvider, SentenceScorer, TfCosine, DIRECT_KNOWLEDGE_CHARS, SNIPPET_CHAR_LIMIT,
};
use crate::gateway::Gateway;
use crate::model::{
    aggregate_response_verdict, Claim, ClaimId, DebateConfig, EvidenceSnippet, EvidenceSource, ModelError, ResponseId,
    ResponseVerdict,
};
use crate::personas::DEFAULT_OPINION_RETRIES;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error(transparent)]
    Claims(#[from] ClaimError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Why a claim received no verdict.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClaimFailure {
    #[error("evidence retrieval: {0}")]
    Evidence(#[from] EvidenceError),
    #[error("debate: {0}")]
    Debate(#[from] DebateError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnverifiableClaim {
    pub claim_id: ClaimId,
    pub claim: String,
    pub reason: String,
}

/// What verification concluded about one response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ResponseOutcome {
    /// At least one claim was verified; `verdict` aggregates those claims.
    Verified {
        verdict: ResponseVerdict,
        unverifiable: Vec<UnverifiableClaim>,
    },
    /// Preprocessing left nothing to check.
    NoVerifiableContent { response_id: ResponseId },
    /// Claims were found but none could be verified.
    AllUnverifiable {
        response_id: ResponseId,
        unverifiable: Vec<UnverifiableClaim>,
    },
}

impl ResponseOutcome {
    pub fn response_id(&self) -> &ResponseId {
        match self {
            ResponseOutcome::Verified { verdict, .. } => &verdict.response_id,
            ResponseOutcome::NoVerifiableContent { response_id }
            | ResponseOutcome::AllUnverifiable { response_id, .. } => response_id,
        }
    }

    pub fn verdict(&self) -> Option<&ResponseVerdict> {
        match self {
            ResponseOutcome::Verified { verdict, .. } => Some(verdict),
            _ => None,
        }
    }

    pub fn unverifiable(&self) -> &[UnverifiableClaim] {
        match self {
            ResponseOutcome::Verified { unverifiable, .. } | ResponseOutcome::AllUnverifiable { unverifiable, .. } => {
                unverifiable
            }
            ResponseOutcome::NoVerifiableContent { .. } => &[],
        }
    }
}

/// Maps `items` through `f` on up to `parallel` threads, keeping input order.
pub(crate) fn ordered_map<T, R, F>(items: &[T], parallel: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if parallel <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..parallel.min(items.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                *slots[i].lock().expect("result slot poisoned") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("result slot poisoned")
                .expect("every slot is filled")
        })
        .collect()
}

/// Verification settings plus the services they run against.
pub struct Verifier<'a> {
    gateway: &'a Gateway,
    search: Option<&'a dyn SearchProvider>,
    scorer: &'a dyn SentenceScorer,
    debate: DebateConfig,
    opinion_retries: u32,
    parallel: usize,
}

impl<'a> Verifier<'a> {
    pub fn new(gateway: &'a Gateway, debate: DebateConfig) -> Self {
        Self {
            gateway,
            search: None,
            scorer: &TfCosine,
            debate,
            opinion_retries: DEFAULT_OPINION_RETRIES,
            parallel: 1,
        }
    }

    /// Web search used for claims whose sample carries no provided knowledge.
    pub fn with_search(mut self, search: &'a dyn SearchProvider) -> Self {
        self.search = Some(search);
        self
    }

    pub fn with_scorer(mut self, scorer: &'a dyn SentenceScorer) -> Self {
        self.scorer = scorer;
        self
    }

    pub fn with_opinion_retries(mut self, retries: u32) -> Self {
        self.opinion_retries = retries;
        self
    }

    /// Bound on concurrent claim debates. `1` keeps provider call order fixed.
    pub fn with_parallel(mut self, parallel: usize) -> Self {
        self.parallel = parallel.max(1);
        self
    }

    pub fn gateway(&self) -> &Gateway {
        self.gateway
    }

    pub fn debate_config(&self) -> &DebateConfig {
        &self.debate
    }

    /// Evidence for one claim. Short provided knowledge is used whole; long
    /// knowledge is ranked sentence by sentence; otherwise web search runs.
    pub fn collect_evidence(
        &self,
        claim: &Claim,
        knowledge: Option<&str>,
    ) -> Result<Vec<EvidenceSnippet>, EvidenceError> {
        let k = self.debate.evidence_k;
        let cut = |mut snippets: Vec<EvidenceSnippet>| {
            for s in &mut snippets {
                s.text = truncate_chars(&s.text, SNIPPET_CHAR_LIMIT).to_string();
            }
            snippets
        };
        if let Some(doc) = knowledge.map(str::trim).filter(|d| !d.is_empty()) {
            if doc.chars().count() < DIRECT_KNOWLEDGE_CHARS {
                return Ok(vec![EvidenceSnippet {
                    text: doc.to_string(),
                    source: EvidenceSource::ProvidedKnowledge,
                    rank: 1,
                    origin_ref: None,
                }]);
            }
            return Ok(cut(rank_local_evidence(
                &claim.text,
                &split_sentences(doc),
                self.scorer,
                k,
            )));
        }
        match self.search {
            Some(search) => {
                let queries = generate_queries(claim, self.gateway)?;
                Ok(cut(fetch_web_evidence(&queries, search, k)?))
            }
            None => {
                tracing::info!(claim = %claim.id, "no knowledge and no search provider; debating without evidence");
                Ok(Vec::new())
            }
        }
    }

    fn verify_claim(&self, claim: &Claim, knowledge: Option<&str>) -> Result<crate::model::ClaimVerdict, ClaimFailure> {
        let evidence = self.collect_evidence(claim, knowledge)?;
        Ok(run_debate_with_retries(
            claim,
            &evidence,
            &self.debate,
            self.gateway,
            self.opinion_retries,
        )?)
    }

    /// Verifies claims already extracted from `sample`.
    pub fn verify_claims(&self, sample: &ResponseSample, claims: &[Claim]) -> Result<ResponseOutcome, PipelineError> {
        self.debate.validate()?;
        if claims.is_empty() {
            return Ok(ResponseOutcome::NoVerifiableContent {
                response_id: sample.response_id.clone(),
            });
        }
        let knowledge = sample.provided_knowledge.as_deref();
        let results = ordered_map(claims, self.parallel, |c| self.verify_claim(c, knowledge));
        let mut verdicts = Vec::new();
        let mut unverifiable = Vec::new();
        for (claim, result) in claims.iter().zip(results) {
            match result {
                Ok(v) => verdicts.push(v),
                Err(e) => {
                    tracing::warn!(claim = %claim.id, error = %e, "claim unverifiable");
                    unverifiable.push(UnverifiableClaim {
                        claim_id: claim.id.clone(),
                        claim: claim.text.clone(),
                        reason: e.to_string(),
                    });
                }
            }
        }
        if verdicts.is_empty() {
            return Ok(ResponseOutcome::AllUnverifiable {
                response_id: sample.response_id.clone(),
                unverifiable,
            });
        }
        Ok(ResponseOutcome::Verified {
            verdict: aggregate_response_verdict(verdicts)?,
            unverifiable,
        })
    }

    /// Runs all three stages on `sample`.
    pub fn verify_response(&self, sample: &ResponseSample) -> Result<ResponseOutcome, PipelineError> {
        match extract_claims(sample, self.gateway) {
            Ok(claims) => self.verify_claims(sample, &claims),
            Err(ClaimError::NoVerifiableContent) => Ok(ResponseOutcome::NoVerifiableContent {
                response_id: sample.response_id.clone(),
            }),
            Err(e) => Err(e.into()),
        }
    }
}
