//! Benchmark harness: datasets, sampling, metrics and the run archive.

mod dataset;
mod metrics;
mod sample;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::claims::claim_id;
use crate::model::{write_document, Claim, ModelError, ResponseId};
use crate::personas::TEMPLATE_VERSION;
use crate::pipeline::{ordered_map, ResponseOutcome, Verifier};

pub use dataset::{load_dataset, parse_dataset, DatasetFormat, FormatError, GoldClaim, LabeledSample};
pub use metrics::{compute_metrics, MetricLevel, MetricsError, MetricsReport};
pub use sample::{sample_balanced, SampleError};

pub const REPORT_FORMAT: &str = "factdebate.report/1";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("response {0}: aggregated verdict disagrees with its claim verdicts")]
    AggregationMismatch(ResponseId),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("writing archive: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RowStatus {
    Verified,
    /// Predicted factual: nothing checkable was found.
    NoVerifiableContent,
    /// Excluded from response-level metrics.
    AllUnverifiable,
    /// Excluded from response-level metrics.
    DetectionFailed {
        reason: String,
    },
}

/// Per-response summary kept in the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub response_id: ResponseId,
    pub gold_factual: bool,
    pub predicted_factual: Option<bool>,
    #[serde(flatten)]
    pub status: RowStatus,
    pub claims_verified: usize,
    pub claims_unverifiable: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    /// `None` when no sample carries gold claim labels.
    pub claim_level: Option<MetricsReport>,
    /// `None` when no response could be scored.
    pub response_level: Option<MetricsReport>,
    pub rows: Vec<BenchmarkRow>,
    pub outcomes: Vec<Option<ResponseOutcome>>,
}

impl BenchmarkRun {
    pub fn count(&self, pred: impl Fn(&RowStatus) -> bool) -> usize {
        self.rows.iter().filter(|r| pred(&r.status)).count()
    }
}

fn gold_claims_of(sample: &LabeledSample) -> Option<Vec<Claim>> {
    let s = &sample.sample;
    let golds = sample.gold_claims.as_ref()?;
    let claims = golds
        .iter()
        .enumerate()
        .filter_map(|(i, g)| {
            Claim::new(
                claim_id(&s.response_id, i + 1),
                g.text.clone(),
                s.response_id.clone(),
                s.task_kind,
                s.question.clone(),
            )
            .ok()
        })
        .collect();
    Some(claims)
}

/// Verifies every sample (up to `parallel` at a time) and scores both levels.
/// Annotated claims, when present, replace claim extraction.
pub fn run_benchmark(
    samples: &[LabeledSample],
    verifier: &Verifier<'_>,
    parallel: usize,
) -> Result<BenchmarkRun, EvalError> {
    let results = ordered_map(samples, parallel, |s| match gold_claims_of(s) {
        Some(claims) => verifier.verify_claims(&s.sample, &claims),
        None => verifier.verify_response(&s.sample),
    });

    let any_claim_golds = samples.iter().any(|s| s.gold_claims.is_some());
    let (mut claim_pred, mut claim_gold, mut claim_skipped) = (Vec::new(), Vec::new(), 0);
    let (mut resp_pred, mut resp_gold, mut resp_skipped) = (Vec::new(), Vec::new(), 0);
    let mut rows = Vec::with_capacity(samples.len());
    let mut outcomes = Vec::with_capacity(samples.len());

    for (sample, result) in samples.iter().zip(results) {
        let response_id = sample.sample.response_id.clone();
        let mut row = BenchmarkRow {
            response_id: response_id.clone(),
            gold_factual: sample.gold_factual,
            predicted_factual: None,
            status: RowStatus::Verified,
            claims_verified: 0,
            claims_unverifiable: 0,
        };
        let outcome = match result {
            Ok(o) => o,
            Err(e) => {
                tracing::warn!(response = %response_id, error = %e, "claim detection failed; response excluded");
                row.status = RowStatus::DetectionFailed { reason: e.to_string() };
                resp_skipped += 1;
                rows.push(row);
                outcomes.push(None);
                continue;
            }
        };
        row.claims_unverifiable = outcome.unverifiable().len();
        claim_skipped += row.claims_unverifiable;
        match &outcome {
            ResponseOutcome::Verified { verdict, .. } => {
                let any_false = verdict.claim_verdicts.iter().any(|c| !c.factual);
                if verdict.factual == any_false {
                    return Err(EvalError::AggregationMismatch(response_id));
                }
                row.claims_verified = verdict.claim_verdicts.len();
                row.predicted_factual = Some(verdict.factual);
                if let Some(golds) = &sample.gold_claims {
                    for cv in &verdict.claim_verdicts {
                        let idx = cv
                            .claim_id
                            .as_str()
                            .rsplit("#c")
                            .next()
                            .and_then(|n| n.parse::<usize>().ok());
                        if let Some(gold) = idx.and_then(|i| golds.get(i - 1)) {
                            claim_pred.push(!cv.factual);
                            claim_gold.push(!gold.factual);
                        }
                    }
                }
            }
            ResponseOutcome::NoVerifiableContent { .. } => {
                row.status = RowStatus::NoVerifiableContent;
                row.predicted_factual = Some(true);
            }
            ResponseOutcome::AllUnverifiable { .. } => {
                tracing::warn!(response = %response_id, "every claim unverifiable; response excluded");
                row.status = RowStatus::AllUnverifiable;
                resp_skipped += 1;
            }
        }
        if let Some(pred) = row.predicted_factual {
            resp_pred.push(!pred);
            resp_gold.push(!sample.gold_factual);
        }
        rows.push(row);
        outcomes.push(Some(outcome));
    }

    let claim_level = if any_claim_golds {
        compute_metrics(&claim_pred, &claim_gold, MetricLevel::Claim)
            .ok()
            .map(|m| m.with_skipped(claim_skipped))
    } else {
        None
    };
    let response_level = compute_metrics(&resp_pred, &resp_gold, MetricLevel::Response)
        .ok()
        .map(|m| m.with_skipped(resp_skipped));
    Ok(BenchmarkRun {
        claim_level,
        response_level,
        rows,
        outcomes,
    })
}

/// The report document: config echo, both metric levels, counts and rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub format: String,
    pub template_version: String,
    pub config: Value,
    pub claim_level: Option<MetricsReport>,
    pub claim_level_note: Option<String>,
    pub response_level: Option<MetricsReport>,
    pub responses: usize,
    pub no_verifiable_content: usize,
    pub all_unverifiable: usize,
    pub detection_failures: usize,
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkReport {
    pub fn new(config: Value, run: &BenchmarkRun) -> Self {
        Self {
            format: REPORT_FORMAT.to_string(),
            template_version: TEMPLATE_VERSION.to_string(),
            config,
            claim_level: run.claim_level.clone(),
            claim_level_note: run
                .claim_level
                .is_none()
                .then(|| "claim-level metrics skipped: no gold claim labels in this dataset".to_string()),
            response_level: run.response_level.clone(),
            responses: run.rows.len(),
            no_verifiable_content: run.count(|s| matches!(s, RowStatus::NoVerifiableContent)),
            all_unverifiable: run.count(|s| matches!(s, RowStatus::AllUnverifiable)),
            detection_failures: run.count(|s| matches!(s, RowStatus::DetectionFailed { .. })),
            rows: run.rows.clone(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

fn file_stem(index: usize, id: &ResponseId) -> String {
    let safe: String = id
        .as_str()
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{index:04}-{safe}")
}

/// Writes `report.json` and one transcript document per verified response
/// under `transcripts/`, replacing any earlier archive in `dir`.
pub fn write_archive(dir: impl AsRef<Path>, report: &BenchmarkReport, run: &BenchmarkRun) -> Result<(), EvalError> {
    let dir = dir.as_ref();
    let io = |e: std::io::Error| EvalError::Io(format!("{}: {e}", dir.display()));
    let transcripts = dir.join("transcripts");
    if transcripts.exists() {
        fs::remove_dir_all(&transcripts).map_err(io)?;
    }
    fs::create_dir_all(&transcripts).map_err(io)?;
    for (i, outcome) in run.outcomes.iter().enumerate() {
        if let Some(verdict) = outcome.as_ref().and_then(ResponseOutcome::verdict) {
            let path = transcripts.join(format!("{}.json", file_stem(i, &verdict.response_id)));
            fs::write(path, write_document(verdict, TEMPLATE_VERSION)).map_err(io)?;
        }
    }
    fs::write(dir.join("report.json"), report.render()).map_err(io)?;
    Ok(())
}
