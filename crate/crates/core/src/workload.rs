//! Query-workload generators and per-key participation accounting.
//!
//! A Pareto workload fixes one popularity weight per key for the whole run
//! and draws each query as a weighted sample without replacement. The sample
//! has the law of taking the `query_size` smallest exponential ranks
//! `E_i / w_i`; for sparse queries it is drawn by successive weighted draws
//! with rejection of repeats, which has the same law.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution as _, Exp1, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed::{self, domain};
use crate::sketch::{BottomKSketch, Key};

/// Key-popularity model of a workload.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Distribution {
    Uniform,
    /// Pareto weights with scale 1 and the given shape.
    Pareto {
        shape: f64,
    },
}

impl Distribution {
    /// Short label, e.g. `uniform` or `pareto1.5`.
    pub fn label(&self) -> String {
        match self {
            Distribution::Uniform => "uniform".to_string(),
            Distribution::Pareto { shape } => format!("pareto{shape}"),
        }
    }
}

impl std::str::FromStr for Distribution {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform" {
            return Ok(Distribution::Uniform);
        }
        if let Some(shape) = s.strip_prefix("pareto") {
            let shape: f64 = shape
                .trim_start_matches([':', '-'])
                .parse()
                .map_err(|_| invalid!("bad Pareto shape in {s:?}"))?;
            return Ok(Distribution::Pareto { shape });
        }
        Err(invalid!("unknown distribution {s:?}"))
    }
}

pub const DEFAULT_SUPPORT: u64 = 1_000_000;
pub const DEFAULT_QUERY_SIZE: usize = 5_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub distribution: Distribution,
    #[serde(default = "default_support")]
    pub support: u64,
    #[serde(default = "default_query_size")]
    pub query_size: usize,
    pub num_queries: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_support() -> u64 {
    DEFAULT_SUPPORT
}

fn default_query_size() -> usize {
    DEFAULT_QUERY_SIZE
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.support == 0 || self.support > u64::from(u32::MAX) {
            return Err(invalid!(
                "support must lie in [1, 2^32), got {}",
                self.support
            ));
        }
        if self.query_size == 0 || self.query_size as u64 > self.support {
            return Err(invalid!(
                "query size {} must lie in [1, support = {}]",
                self.query_size,
                self.support
            ));
        }
        if let Distribution::Pareto { shape } = self.distribution {
            if !(shape > 1.0 && shape.is_finite()) {
                return Err(invalid!("Pareto shape must exceed 1, got {shape}"));
            }
        }
        Ok(())
    }
}

enum Sampler {
    Uniform,
    Weighted {
        weights: Vec<f64>,
        alias: WeightedAliasIndex<f64>,
        stamp: Vec<u32>,
        epoch: u32,
    },
}

/// Deterministic stream of query sets; each item is sorted by key.
pub struct Workload {
    spec: WorkloadSpec,
    rng: ChaCha8Rng,
    sampler: Sampler,
    emitted: u64,
}

pub fn gen_workload(spec: WorkloadSpec) -> Result<Workload> {
    Workload::new(spec)
}

impl Workload {
    pub fn new(spec: WorkloadSpec) -> Result<Self> {
        spec.validate()?;
        let sampler = match spec.distribution {
            Distribution::Uniform => Sampler::Uniform,
            Distribution::Pareto { shape } => {
                let mut wrng =
                    ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, domain::WEIGHTS, 0));
                let pareto =
                    Pareto::new(1.0, shape).map_err(|e| invalid!("Pareto({shape}): {e}"))?;
                let weights: Vec<f64> = (0..spec.support)
                    .map(|_| pareto.sample(&mut wrng))
                    .collect();
                let alias = WeightedAliasIndex::new(weights.clone())
                    .map_err(|e| invalid!("weight table: {e}"))?;
                Sampler::Weighted {
                    weights,
                    alias,
                    stamp: vec![0; spec.support as usize],
                    epoch: 0,
                }
            }
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, domain::WORKLOAD, 0)),
            spec,
            sampler,
            emitted: 0,
        })
    }

    pub fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    /// Popularity weights of a Pareto workload, indexed by key.
    pub fn weights(&self) -> Option<&[f64]> {
        match &self.sampler {
            Sampler::Uniform => None,
            Sampler::Weighted { weights, .. } => Some(weights),
        }
    }

    fn draw(&mut self) -> Vec<Key> {
        let size = self.spec.query_size;
        let support = self.spec.support as usize;
        let mut keys: Vec<Key> = match &mut self.sampler {
            Sampler::Uniform => index::sample(&mut self.rng, support, size)
                .into_iter()
                .map(|i| Key(i as u64))
                .collect(),
            Sampler::Weighted { weights, .. } if 4 * size > support => {
                exponential_ranks(weights, size, &mut self.rng)
            }
            Sampler::Weighted {
                alias,
                stamp,
                epoch,
                ..
            } => {
                *epoch = epoch.wrapping_add(1);
                if *epoch == 0 {
                    stamp.fill(0);
                    *epoch = 1;
                }
                let mut out = Vec::with_capacity(size);
                while out.len() < size {
                    let i = alias.sample(&mut self.rng);
                    if stamp[i] != *epoch {
                        stamp[i] = *epoch;
                        out.push(Key(i as u64));
                    }
                }
                out
            }
        };
        keys.sort_unstable();
        keys
    }
}

/// The `size` keys with smallest `E_i / w_i`, `E_i ~ Exp(1)`.
fn exponential_ranks(weights: &[f64], size: usize, rng: &mut impl Rng) -> Vec<Key> {
    let mut ranks: Vec<(f64, u64)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let e: f64 = Exp1.sample(rng);
            (e / w, i as u64)
        })
        .collect();
    if size < ranks.len() {
        ranks.select_nth_unstable_by(size, |a, b| a.0.total_cmp(&b.0));
    }
    ranks.truncate(size);
    ranks.into_iter().map(|(_, i)| Key(i)).collect()
}

impl Iterator for Workload {
    type Item = Vec<Key>;

    fn next(&mut self) -> Option<Vec<Key>> {
        if self.emitted >= self.spec.num_queries {
            return None;
        }
        self.emitted += 1;
        Some(self.draw())
    }
}

/// Counts, per key, how many query sets and query sketches contained it.
#[derive(Clone, Debug, Default)]
pub struct ParticipationTracker {
    set_counts: HashMap<Key, u32>,
    sketch_counts: HashMap<Key, u32>,
    queries: u64,
}

impl ParticipationTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one query and its sketch. The sketch must summarize `query`.
    pub fn track(&mut self, query: &[Key], sketch: &BottomKSketch) {
        for &key in query {
            *self.set_counts.entry(key).or_insert(0) += 1;
        }
        for key in sketch.keys() {
            *self.sketch_counts.entry(key).or_insert(0) += 1;
        }
        self.queries += 1;
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    pub fn set_count(&self, key: Key) -> u32 {
        self.set_counts.get(&key).copied().unwrap_or(0)
    }

    pub fn sketch_count(&self, key: Key) -> u32 {
        self.sketch_counts.get(&key).copied().unwrap_or(0)
    }

    pub fn max_set_count(&self) -> u32 {
        self.set_counts.values().copied().max().unwrap_or(0)
    }

    /// Largest per-key sketch participation seen so far.
    pub fn max_sketch_count(&self) -> u32 {
        self.sketch_counts.values().copied().max().unwrap_or(0)
    }

    pub fn keys(&self) -> impl Iterator<Item = Key> + '_ {
        self.set_counts.keys().copied()
    }
}
