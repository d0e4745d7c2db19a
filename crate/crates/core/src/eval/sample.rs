//! Seeded label-balanced subsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::LabeledSample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("{label} pool exhausted after {drawn} of {requested} draws")]
    PoolExhausted {
        label: &'static str,
        drawn: usize,
        requested: usize,
    },
}

/// For each of `n` slots, picks "hallucinated" with probability `p`, then
/// draws uniformly without replacement from that label's pool.
pub fn sample_balanced(
    dataset: &[LabeledSample],
    n: usize,
    p: f64,
    seed: u64,
) -> Result<Vec<LabeledSample>, SampleError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SampleError::InvalidProbability(p));
    }
    let (mut positives, mut negatives): (Vec<&LabeledSample>, Vec<&LabeledSample>) =
        dataset.iter().partition(|s| s.is_positive());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for drawn in 0..n {
        let positive = rng.random_bool(p);
        let (pool, label) = if positive {
            (&mut positives, "hallucinated")
        } else {
            (&mut negatives, "factual")
        };
        if pool.is_empty() {
            return Err(SampleError::PoolExhausted {
                label,
                drawn,
                requested: n,
            });
        }
        let i = rng.random_range(0..pool.len());
        out.push(pool.remove(i).clone());
    }
    Ok(out)
}
