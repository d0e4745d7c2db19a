//! Confusion counts and derived ratios. The positive class is "hallucinated".

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricLevel {
    Claim,
    Response,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{predictions} predictions for {golds} gold labels")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("no labelled pairs to score")]
    EmptyInput,
}

/// Proportions in `[0, 1]`; zero denominators give 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub level: MetricLevel,
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub skipped_unverifiable: usize,
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn with_skipped(mut self, skipped: usize) -> Self {
        self.skipped_unverifiable = skipped;
        self
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `predictions[i]` and `golds[i]` are "non-factual" flags for the same item.
pub fn compute_metrics(
    predictions: &[bool],
    golds: &[bool],
    level: MetricLevel,
) -> Result<MetricsReport, MetricsError> {
    if predictions.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &g) in predictions.iter().zip(golds) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricsReport {
        level,
        accuracy: ratio(tp + tn, predictions.len()),
        recall,
        precision,
        f1,
        tp,
        fp,
        tn,
        fn_,
        skipped_unverifiable: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(tp: usize, fp: usize, tn: usize, fn_: usize) -> (Vec<bool>, Vec<bool>) {
        let mut p = Vec::new();
        let mut g = Vec::new();
        for (n, pv, gv) in [
            (tp, true, true),
            (fp, true, false),
            (tn, false, false),
            (fn_, false, true),
        ] {
            p.extend(std::iter::repeat_n(pv, n));
            g.extend(std::iter::repeat_n(gv, n));
        }
        (p, g)
    }

    #[test]
    fn hand_case() {
        let (p, g) = pairs(2, 1, 1, 1);
        let m = compute_metrics(&p, &g, MetricLevel::Claim).unwrap();
        assert!((m.accuracy - 0.6).abs() < 5e-5);
        for v in [m.precision, m.recall, m.f1] {
            assert!((v - 0.6667).abs() < 5e-5);
        }
    }

    #[test]
    fn response_level_counts_from_a_published_table_row() {
        // 50 responses, 23 hallucinated: tp 12, fp 3, tn 24, fn 11.
        let (p, g) = pairs(12, 3, 24, 11);
        let m = compute_metrics(&p, &g, MetricLevel::Response).unwrap();
        assert!((m.accuracy - 0.72).abs() < 1e-12);
        assert!((m.recall - 12.0 / 23.0).abs() < 1e-12);
        assert!((m.precision - 0.8).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        let g = [true, false, true, false];
        let perfect = compute_metrics(&g, &g, MetricLevel::Response).unwrap();
        assert_eq!((perfect.accuracy, perfect.f1), (1.0, 1.0));
        let none = compute_metrics(&[false; 4], &g, MetricLevel::Response).unwrap();
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
        assert_eq!(
            compute_metrics(&[], &[], MetricLevel::Claim),
            Err(MetricsError::EmptyInput)
        );
        assert!(matches!(
            compute_metrics(&[true], &[true, false], MetricLevel::Claim),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn permutation_invariant(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let (p, g): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (sp, sg): (Vec<bool>, Vec<bool>) = shuffled.into_iter().unzip();
            let a = compute_metrics(&p, &g, MetricLevel::Claim).unwrap();
            prop_assert_eq!(a.total(), pairs.len());
            prop_assert_eq!(a, compute_metrics(&sp, &sg, MetricLevel::Claim).unwrap());
        }
    }
}
