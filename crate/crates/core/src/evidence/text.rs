//! Local retrieval over a provided document: segmentation, lexical scoring
//! and top-k ranking.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{EvidenceSnippet, EvidenceSource};

/// A sentence and its byte range in the source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Lower-cased abbreviations whose trailing period never ends a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "gen", "col", "lt", "sgt", "capt", "rev", "hon", "gov",
    "sen", "rep", "vs", "e.g", "i.e", "cf", "approx", "fig", "ft",
];

const TERMINALS: &[char] = &['.', '!', '?'];
const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}', '\u{bb}'];

/// `U.S`, `a.m`: letters separated by single periods.
fn is_dotted_acronym(token: &str) -> bool {
    let parts: Vec<&str> = token.split('.').collect();
    parts.len() >= 2
        && parts
            .iter()
            .all(|p| p.chars().count() == 1 && p.chars().all(char::is_alphabetic))
}

fn token_before(text: &str, at: usize) -> &str {
    let start = text[..at]
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    text[start..at].trim_start_matches(|c: char| !c.is_alphanumeric())
}

fn next_visible(text: &str, from: usize) -> Option<char> {
    text[from..].chars().find(|c| !c.is_whitespace())
}

/// Rule-based segmentation: a sentence ends at a run of `.`, `!` or `?`
/// (plus closing quotes or brackets) followed by whitespace or the end of
/// the text. A lone period after a known abbreviation does not end a
/// sentence; after a dotted acronym it does only before an upper-case word.
/// A terminal inside closing quotes does not end a sentence that continues
/// in lower case.
pub fn split_sentences(document: &str) -> Vec<Sentence> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut pos = 0;
    while let Some(c) = document[pos..].chars().next() {
        let here = pos;
        pos += c.len_utf8();
        if start.is_none() && !c.is_whitespace() {
            start = Some(here);
        }
        if !TERMINALS.contains(&c) {
            continue;
        }
        let mut end = pos;
        while let Some(n) = document[end..].chars().next().filter(|n| TERMINALS.contains(n)) {
            end += n.len_utf8();
        }
        let run_end = end;
        while let Some(n) = document[end..].chars().next().filter(|n| CLOSERS.contains(n)) {
            end += n.len_utf8();
        }
        let boundary = document[end..].chars().next().is_none_or(char::is_whitespace);
        if !boundary {
            continue;
        }
        // `"Are we late?" she asked.` is one sentence.
        if end > run_end && next_visible(document, end).is_some_and(char::is_lowercase) {
            pos = end;
            continue;
        }
        if document[here..end].trim_end_matches(CLOSERS) == "." {
            let token = token_before(document, here).to_lowercase();
            if ABBREVIATIONS.contains(&token.as_str()) {
                pos = end;
                continue;
            }
            if is_dotted_acronym(&token) && !next_visible(document, end).is_some_and(char::is_uppercase) {
                pos = end;
                continue;
            }
        }
        if let Some(s) = start.take() {
            out.push(Sentence {
                text: document[s..end].to_string(),
                start: s,
                end,
            });
        }
        pos = end;
    }
    if let Some(s) = start {
        let end = document.trim_end().len();
        if end > s {
            out.push(Sentence {
                text: document[s..end].to_string(),
                start: s,
                end,
            });
        }
    }
    out
}

/// Lower-cased tokens with every non-alphanumeric character removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn term_frequencies(text: &str) -> HashMap<String, u64> {
    let mut tf = HashMap::new();
    for t in tokenize(text) {
        *tf.entry(t).or_insert(0) += 1;
    }
    tf
}

/// Cosine similarity of raw term-frequency vectors, in `[0, 1]`.
pub fn lexical_score(query: &str, sentence: &str) -> f64 {
    let a = term_frequencies(query);
    let b = term_frequencies(sentence);
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let dot: u64 = a.iter().filter_map(|(t, x)| b.get(t).map(|y| x * y)).sum();
    let na: u64 = a.values().map(|x| x * x).sum();
    let nb: u64 = b.values().map(|y| y * y).sum();
    // sqrt(na * nb) is exact when the vectors coincide, so identical token
    // multisets score exactly 1.
    (dot as f64 / ((na as f64) * (nb as f64)).sqrt()).min(1.0)
}

/// Similarity between a claim (the query) and a candidate sentence.
pub trait SentenceScorer: Send + Sync {
    fn score(&self, query: &str, sentence: &str) -> f64;
}

impl<F> SentenceScorer for F
where
    F: Fn(&str, &str) -> f64 + Send + Sync,
{
    fn score(&self, query: &str, sentence: &str) -> f64 {
        self(query, sentence)
    }
}

/// The default offline scorer: [`lexical_score`].
#[derive(Debug, Clone, Copy, Default)]
pub struct TfCosine;

impl SentenceScorer for TfCosine {
    fn score(&self, query: &str, sentence: &str) -> f64 {
        lexical_score(query, sentence)
    }
}

/// The `k` best sentences by non-increasing score, ties in document order.
pub fn rank_local_evidence(
    claim_text: &str,
    sentences: &[Sentence],
    scorer: &dyn SentenceScorer,
    k: usize,
) -> Vec<EvidenceSnippet> {
    let mut scored: Vec<(f64, usize)> = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| (scorer.score(claim_text, &s.text), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(rank, (_, i))| EvidenceSnippet {
            text: sentences[i].text.clone(),
            source: EvidenceSource::LocalRanked,
            rank: rank as u32 + 1,
            origin_ref: Some(format!("bytes {}..{}", sentences[i].start, sentences[i].end)),
        })
        .collect()
}
