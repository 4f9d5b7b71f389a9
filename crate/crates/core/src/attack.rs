//! Adaptive attack that isolates low-priority keys of a ground set.
//!
//! Each round splits the ground set into two random halves and queries
//! both. A half whose estimate overshoots its true size tends to hold extra
//! low-priority keys, so every member is credited with the half's relative
//! error. The top-scored keys are then removed and the remainder is queried:
//! against the standard estimator the answer is biased down.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed::{self, domain};
use crate::sketch::{CardinalityEstimate, Key};

/// Rounds per unit of `ln k` in the calibrated attack. At `k = 64` this is
/// 495 rounds, 991 queries in total.
pub const ROUNDS_PER_LN_K: f64 = 119.0;
/// Removed keys per unit of `k` in the calibrated attack.
pub const REMOVED_PER_K: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub k: usize,
    pub rounds: usize,
    pub removal_fraction: f64,
    pub seed: u64,
}

impl AttackConfig {
    /// `ROUNDS_PER_LN_K * ln k` rounds removing `REMOVED_PER_K * k` keys.
    pub fn calibrated(k: usize, ground_size: usize, seed: u64) -> Self {
        Self {
            k,
            rounds: (ROUNDS_PER_LN_K * (k as f64).ln()).ceil() as usize,
            removal_fraction: (REMOVED_PER_K * k as f64 / ground_size as f64).min(1.0),
            seed,
        }
    }

    /// Total number of queries the attack issues.
    pub fn queries(&self) -> usize {
        2 * self.rounds + 1
    }
}

/// One line of the attack transcript.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub qid: u64,
    pub size: usize,
    pub estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub queries_used: u64,
    pub removed_keys: Vec<Key>,
    pub final_true_cardinality: usize,
    pub final_estimate: f64,
    /// `(final_estimate - final_true_cardinality) / final_true_cardinality`.
    pub relative_error: f64,
}

/// Runs the attack over `ground` with `oracle` answering cardinality queries.
///
/// The round queries depend only on `cfg.seed`; only the final query depends
/// on the oracle's answers.
pub fn attack_standard_estimator<F>(
    ground: &[Key],
    cfg: &AttackConfig,
    mut oracle: F,
) -> Result<(AttackReport, Vec<TranscriptEntry>)>
where
    F: FnMut(&[Key]) -> Result<CardinalityEstimate>,
{
    let mut ground: Vec<Key> = ground.to_vec();
    ground.sort_unstable();
    ground.dedup();
    let size = ground.len();
    if cfg.k == 0 || size < 4 * cfg.k {
        return Err(invalid!(
            "ground set of {size} keys is smaller than 4k = {}",
            4 * cfg.k
        ));
    }
    if !(0.0..=1.0).contains(&cfg.removal_fraction) {
        return Err(invalid!(
            "removal fraction must lie in [0, 1], got {}",
            cfg.removal_fraction
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, domain::ATTACK, 0));
    let mut transcript = Vec::with_capacity(cfg.queries());
    let mut scores = vec![0.0f64; size];
    let mut order: Vec<usize> = (0..size).collect();
    let half = size / 2;
    let mut query = Vec::with_capacity(size);

    for _ in 0..cfg.rounds {
        order.shuffle(&mut rng);
        for part in [&order[..half], &order[half..]] {
            query.clear();
            query.extend(part.iter().map(|&i| ground[i]));
            let est = oracle(&query)?;
            transcript.push(TranscriptEntry {
                qid: transcript.len() as u64,
                size: query.len(),
                estimate: est.value,
            });
            let score = (est.value - query.len() as f64) / query.len() as f64;
            for &i in part {
                scores[i] += score;
            }
        }
    }

    let remove = if cfg.rounds == 0 {
        0
    } else {
        (cfg.removal_fraction * size as f64).ceil() as usize
    };
    let mut ranked: Vec<usize> = (0..size).collect();
    ranked.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(ground[a].cmp(&ground[b]))
    });
    let mut removed_mask = vec![false; size];
    for &i in &ranked[..remove.min(size)] {
        removed_mask[i] = true;
    }
    let removed_keys: Vec<Key> = (0..size)
        .filter(|&i| removed_mask[i])
        .map(|i| ground[i])
        .collect();
    let remaining: Vec<Key> = (0..size)
        .filter(|&i| !removed_mask[i])
        .map(|i| ground[i])
        .collect();

    let est = oracle(&remaining)?;
    transcript.push(TranscriptEntry {
        qid: transcript.len() as u64,
        size: remaining.len(),
        estimate: est.value,
    });
    let truth = remaining.len();
    let report = AttackReport {
        queries_used: transcript.len() as u64,
        removed_keys,
        final_true_cardinality: truth,
        final_estimate: est.value,
        relative_error: (est.value - truth as f64) / truth as f64,
    };
    Ok((report, transcript))
}
