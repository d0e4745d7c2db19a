//! Benchmark dataset loaders. Every format is line-delimited JSON; blank
//! lines are skipped and unknown fields are ignored.
//!
//! | format | fields | samples per record |
//! |---|---|---|
//! | `factool-qa` | `prompt`, `response`, `response_label` (true = factual), optional `id`, optional `claims: [{claim, label}]` | 1 |
//! | `halueval-qa` | `knowledge`, `question`, then `answer` + `hallucination` ("yes"/"no"), or `right_answer` + `hallucinated_answer` | 1 or 2 |
//! | `halueval-summarization` | `document`, then `summary` + `hallucination`, or `right_summary` + `hallucinated_summary` | 1 or 2 |
//! | `halueval-dialogue` | `knowledge`, `dialogue_history`, then `response` + `hallucination`, or `right_response` + `hallucinated_response` | 1 or 2 |

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::claims::ResponseSample;
use crate::model::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetFormat {
    #[serde(rename = "factool-qa")]
    FactoolQa,
    #[serde(rename = "halueval-qa")]
    HaluEvalQa,
    #[serde(rename = "halueval-summarization")]
    HaluEvalSumm,
    #[serde(rename = "halueval-dialogue")]
    HaluEvalDialogue,
}

impl DatasetFormat {
    pub const ALL: [DatasetFormat; 4] = [
        DatasetFormat::FactoolQa,
        DatasetFormat::HaluEvalQa,
        DatasetFormat::HaluEvalSumm,
        DatasetFormat::HaluEvalDialogue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetFormat::FactoolQa => "factool-qa",
            DatasetFormat::HaluEvalQa => "halueval-qa",
            DatasetFormat::HaluEvalSumm => "halueval-summarization",
            DatasetFormat::HaluEvalDialogue => "halueval-dialogue",
        }
    }

    pub fn task_kind(self) -> TaskKind {
        match self {
            DatasetFormat::FactoolQa | DatasetFormat::HaluEvalQa => TaskKind::Qa,
            DatasetFormat::HaluEvalSumm => TaskKind::Summarization,
            DatasetFormat::HaluEvalDialogue => TaskKind::Dialogue,
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown dataset format {s:?}"))
    }
}

/// An annotated claim supplied by the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldClaim {
    pub text: String,
    pub factual: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sample: ResponseSample,
    pub gold_factual: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_claims: Option<Vec<GoldClaim>>,
}

impl LabeledSample {
    /// Hallucinated samples are the positive class.
    pub fn is_positive(&self) -> bool {
        !self.gold_factual
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("record {index} (line {line}): {reason}")]
    Record { index: usize, line: usize, reason: String },
}

type Fields = Map<String, Value>;

fn text(record: &Fields, key: &str) -> Result<String, String> {
    match record.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Value::String(_)) => Err(format!("`{key}` is empty")),
        Some(other) => Err(format!("`{key}` must be a string, got {other}")),
        None => Err(format!("missing `{key}`")),
    }
}

fn yes_no(record: &Fields, key: &str) -> Result<bool, String> {
    match record.get(key) {
        Some(Value::String(s)) => match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Ok(true),
            "no" => Ok(false),
            other => Err(format!("`{key}` must be \"yes\" or \"no\", got {other:?}")),
        },
        Some(Value::Bool(b)) => Ok(*b),
        Some(other) => Err(format!("`{key}` must be \"yes\" or \"no\", got {other}")),
        None => Err(format!("missing gold label `{key}`")),
    }
}

fn boolean(value: Option<&Value>, key: &str) -> Result<bool, String> {
    match value {
        Some(Value::Bool(b)) => Ok(*b),
        Some(other) => Err(format!("`{key}` must be a boolean, got {other}")),
        None => Err(format!("missing gold label `{key}`")),
    }
}

fn factool(record: &Fields, index: usize) -> Result<Vec<LabeledSample>, String> {
    let id = match record.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("factool-qa-{index}"),
    };
    let sample =
        ResponseSample::new(id, TaskKind::Qa, text(record, "response")?).with_question(text(record, "prompt")?);
    let gold_factual = boolean(record.get("response_label"), "response_label")?;
    let gold_claims = match record.get("claims") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => Some(
            items
                .iter()
                .enumerate()
                .map(|(i, item)| {
                    let obj = item.as_object().ok_or(format!("claims[{i}] must be an object"))?;
                    Ok(GoldClaim {
                        text: text(obj, "claim").map_err(|e| format!("claims[{i}]: {e}"))?,
                        factual: boolean(obj.get("label"), "label").map_err(|e| format!("claims[{i}]: {e}"))?,
                    })
                })
                .collect::<Result<Vec<_>, String>>()?,
        ),
        Some(other) => return Err(format!("`claims` must be an array, got {other}")),
    };
    Ok(vec![LabeledSample {
        sample,
        gold_factual,
        gold_claims,
    }])
}

/// HaluEval records come labeled (`<field>` + `hallucination`) or paired
/// (`right_<field>` + `hallucinated_<field>`).
fn halueval(
    record: &Fields,
    index: usize,
    format: DatasetFormat,
    field: &str,
    base: impl Fn(String, String) -> Result<ResponseSample, String>,
) -> Result<Vec<LabeledSample>, String> {
    let prefix = format.as_str();
    if record.contains_key(field) {
        let positive = yes_no(record, "hallucination")?;
        return Ok(vec![LabeledSample {
            sample: base(format!("{prefix}-{index}"), text(record, field)?)?,
            gold_factual: !positive,
            gold_claims: None,
        }]);
    }
    let right = format!("right_{field}");
    let wrong = format!("hallucinated_{field}");
    if !record.contains_key(&right) && !record.contains_key(&wrong) {
        return Err(format!("missing `{field}` (or `{right}` and `{wrong}`)"));
    }
    Ok(vec![
        LabeledSample {
            sample: base(format!("{prefix}-{index}-right"), text(record, &right)?)?,
            gold_factual: true,
            gold_claims: None,
        },
        LabeledSample {
            sample: base(format!("{prefix}-{index}-hallucinated"), text(record, &wrong)?)?,
            gold_factual: false,
            gold_claims: None,
        },
    ])
}

fn map_record(record: &Fields, index: usize, format: DatasetFormat) -> Result<Vec<LabeledSample>, String> {
    match format {
        DatasetFormat::FactoolQa => factool(record, index),
        DatasetFormat::HaluEvalQa => {
            let question = text(record, "question")?;
            let knowledge = text(record, "knowledge")?;
            halueval(record, index, format, "answer", |id, answer| {
                Ok(ResponseSample::new(id, TaskKind::Qa, answer)
                    .with_question(question.clone())
                    .with_knowledge(knowledge.clone()))
            })
        }
        DatasetFormat::HaluEvalSumm => {
            let document = text(record, "document")?;
            halueval(record, index, format, "summary", |id, summary| {
                Ok(ResponseSample::new(id, TaskKind::Summarization, summary).with_knowledge(document.clone()))
            })
        }
        DatasetFormat::HaluEvalDialogue => {
            let history = text(record, "dialogue_history")?;
            let knowledge = text(record, "knowledge")?;
            halueval(record, index, format, "response", |id, response| {
                Ok(ResponseSample::new(id, TaskKind::Dialogue, response)
                    .with_dialogue_history(history.clone())
                    .with_knowledge(knowledge.clone()))
            })
        }
    }
}

/// Parses line-delimited records, failing on the first malformed one.
pub fn parse_dataset(content: &str, format: DatasetFormat) -> Result<Vec<LabeledSample>, FormatError> {
    let mut out = Vec::new();
    let records = content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    for (index, (line_no, line)) in records.enumerate() {
        let fail = |reason: String| FormatError::Record {
            index,
            line: line_no + 1,
            reason,
        };
        let value: Value = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        let record = value
            .as_object()
            .ok_or_else(|| fail("record is not an object".into()))?;
        out.extend(map_record(record, index, format).map_err(fail)?);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Vec<LabeledSample>, FormatError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| FormatError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_dataset(&content, format)
}
