//! Web search providers and the two-query merge.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::text::tokenize;
use super::{EvidenceError, QuerySet};
use crate::gateway::{prompt_digest, RetryPolicy};
use crate::model::{EvidenceSnippet, EvidenceSource};

/// One ranked search result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

pub trait SearchProvider: Send + Sync {
    /// Results in provider order, at most `k`.
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, EvidenceError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    WebApi,
    Fixture,
}

/// Declarative provider choice. `Fixture` needs `dir`; `WebApi` needs
/// `endpoint`, `api_key` and `cx`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchDescriptor {
    pub kind: SearchKind,
    pub config: BTreeMap<String, String>,
}

impl SearchDescriptor {
    pub fn fixture(dir: impl Into<String>) -> Self {
        Self {
            kind: SearchKind::Fixture,
            config: BTreeMap::from([("dir".to_string(), dir.into())]),
        }
    }

    pub fn build(&self) -> Result<Box<dyn SearchProvider>, EvidenceError> {
        let get = |key: &str| {
            self.config
                .get(key)
                .cloned()
                .ok_or_else(|| EvidenceError::Config(format!("{:?} search provider requires `{key}`", self.kind)))
        };
        Ok(match self.kind {
            SearchKind::Fixture => Box::new(FixtureSearch::new(get("dir")?)),
            SearchKind::WebApi => Box::new(WebSearch::new(get("endpoint")?, get("api_key")?, get("cx")?)),
        })
    }
}

#[derive(Deserialize)]
struct FixtureFile {
    #[serde(default)]
    query: Option<String>,
    results: Vec<SearchHit>,
}

/// Offline provider reading `<sha256(query)>.json` files holding
/// `{"query": ..., "results": [{title, snippet, url, score?}, ...]}`.
#[derive(Debug, Clone)]
pub struct FixtureSearch {
    dir: PathBuf,
}

impl FixtureSearch {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn fixture_path(&self, query: &str) -> PathBuf {
        self.dir.join(format!("{}.json", prompt_digest(query)))
    }
}

impl SearchProvider for FixtureSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, EvidenceError> {
        let path = self.fixture_path(query);
        let text = fs::read_to_string(&path).map_err(|e| {
            EvidenceError::Provider(format!("no fixture for query {query:?} at {}: {e}", path.display()))
        })?;
        let file: FixtureFile =
            serde_json::from_str(&text).map_err(|e| EvidenceError::Provider(format!("{}: {e}", path.display())))?;
        if let Some(recorded) = &file.query {
            if recorded != query {
                return Err(EvidenceError::Provider(format!(
                    "{} records query {recorded:?}, not {query:?}",
                    path.display()
                )));
            }
        }
        Ok(file.results.into_iter().take(k).collect())
    }
}

/// Google Custom Search JSON API client.
pub struct WebSearch {
    endpoint: String,
    api_key: String,
    cx: String,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl WebSearch {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, cx: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            cx: cx.into(),
            retry: RetryPolicy::default(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(30)).build(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn attempt(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, (bool, String)> {
        // The API caps `num` at 10 per page.
        let num = k.clamp(1, 10).to_string();
        let response = self
            .agent
            .get(&self.endpoint)
            .query("key", &self.api_key)
            .query("cx", &self.cx)
            .query("q", query)
            .query("num", &num)
            .call();
        let response = match response {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err((status == 429 || status >= 500, format!("status {status}: {body}")));
            }
            Err(ureq::Error::Transport(t)) => return Err((true, t.to_string())),
        };
        let value: Value = response.into_json().map_err(|e| (true, e.to_string()))?;
        let items = match value.get("items") {
            None => return Ok(Vec::new()),
            Some(Value::Array(items)) => items,
            Some(other) => return Err((false, format!("`items` is not an array: {other}"))),
        };
        Ok(items
            .iter()
            .take(k)
            .map(|item| SearchHit {
                title: item["title"].as_str().unwrap_or_default().to_string(),
                snippet: item["snippet"].as_str().unwrap_or_default().to_string(),
                url: item["link"].as_str().map(str::to_string),
                score: None,
            })
            .collect())
    }
}

impl SearchProvider for WebSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, EvidenceError> {
        let mut attempt = 0;
        loop {
            match self.attempt(query, k) {
                Ok(hits) => return Ok(hits),
                Err((true, reason)) if attempt < self.retry.max_retries => {
                    tracing::warn!(attempt, %reason, "search failed, retrying");
                    thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err((_, reason)) => return Err(EvidenceError::Provider(reason)),
            }
        }
    }
}

/// The dedupe key: lower-cased alphanumeric tokens joined by single spaces.
pub fn normalize_snippet(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Runs both queries concurrently and merges their hits into at most `k`
/// snippets. Hits are ordered by provider score (descending) when scores are
/// present, then by position within their query, then by query order;
/// duplicates by normalized text keep their first occurrence.
pub fn fetch_web_evidence(
    queries: &QuerySet,
    provider: &dyn SearchProvider,
    k: usize,
) -> Result<Vec<EvidenceSnippet>, EvidenceError> {
    if k == 0 {
        return Err(EvidenceError::Config("evidence budget k must be at least 1".into()));
    }
    let [q1, q2] = queries.queries();
    let (r1, r2) = thread::scope(|s| {
        let h = s.spawn(|| provider.search(q2, k));
        let r1 = provider.search(q1, k);
        (r1, h.join().expect("search thread panicked"))
    });
    let mut candidates: Vec<(usize, usize, SearchHit)> = Vec::new();
    for (qi, hits) in [r1?, r2?].into_iter().enumerate() {
        candidates.extend(hits.into_iter().enumerate().map(|(pos, hit)| (qi, pos, hit)));
    }
    candidates.sort_by(|a, b| {
        let score = |h: &SearchHit| h.score.unwrap_or(f64::NEG_INFINITY);
        score(&b.2)
            .total_cmp(&score(&a.2))
            .then(a.1.cmp(&b.1))
            .then(a.0.cmp(&b.0))
    });
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (_, _, hit) in candidates {
        let text = if hit.snippet.trim().is_empty() {
            hit.title
        } else {
            hit.snippet
        };
        let key = normalize_snippet(&text);
        if key.is_empty() || !seen.insert(key) {
            continue;
        }
        out.push(EvidenceSnippet {
            text: text.trim().to_string(),
            source: EvidenceSource::WebSearch,
            rank: out.len() as u32 + 1,
            origin_ref: hit.url,
        });
        if out.len() == k {
            break;
        }
    }
    Ok(out)
}
