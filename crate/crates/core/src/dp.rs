//! Laplace noise, AboveThreshold with individual privacy charging, and
//! closed-form privacy accounting.
//!
//! The AboveThreshold test evaluates a counting query over the *active*
//! indices only. A positive outcome charges every active index that
//! contributed a 1, and an index whose charge reaches the budget `r` is
//! deactivated for good. Negative outcomes leave the ledger untouched.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed::{self, domain};
use crate::sketch::Key;

/// Which robust estimator a parameter set belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Basic,
    Tracking,
}

impl Variant {
    /// Factor applied to the accuracy parameter when deriving the per-test
    /// privacy parameter (`alpha/8` basic, `alpha/16` tracking).
    pub fn alpha_divisor(self) -> f64 {
        match self {
            Variant::Basic => 8.0,
            Variant::Tracking => 16.0,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Variant::Basic),
            "tracking" => Ok(Variant::Tracking),
            other => Err(invalid!("unknown estimator variant {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum NoiseSource {
    Seeded(u64),
    Pinned(f64),
}

/// A counter-indexed stream of noise draws.
///
/// Draw `j` of a seeded stream is a pure function of `(seed, j)`. A pinned
/// stream returns the same value for every draw regardless of scale, which
/// lets tests replay estimator traces exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseStream {
    source: NoiseSource,
    counter: u64,
}

impl NoiseStream {
    /// Stream 0 derived from `master` under the noise domain tag.
    pub fn new(master: u64) -> Self {
        Self::with_index(master, 0)
    }

    /// Stream `index` derived from `master` under the noise domain tag.
    pub fn with_index(master: u64, index: u64) -> Self {
        Self {
            source: NoiseSource::Seeded(seed::derive(master, domain::NOISE, index)),
            counter: 0,
        }
    }

    /// A stream whose every draw is exactly `value`.
    pub fn pinned(value: f64) -> Self {
        Self {
            source: NoiseSource::Pinned(value),
            counter: 0,
        }
    }

    pub fn is_pinned(&self) -> bool {
        matches!(self.source, NoiseSource::Pinned(_))
    }

    /// Number of draws taken so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Uniform `(0, 1)` value of draw `j` for a seeded stream.
    fn uniform_at(key: u64, j: u64) -> f64 {
        seed::open_unit_f64(seed::mix64(
            key ^ seed::mix64(j.wrapping_add(0x632b_e59b_d9b4_e019)),
        ))
    }

    pub(crate) fn next_laplace(&mut self, scale: f64) -> f64 {
        let j = self.counter;
        self.counter += 1;
        match self.source {
            NoiseSource::Pinned(v) => v,
            NoiseSource::Seeded(key) => laplace_inverse_cdf(Self::uniform_at(key, j), scale),
        }
    }
}

#[inline]
fn laplace_inverse_cdf(u: f64, scale: f64) -> f64 {
    if u < 0.5 {
        scale * (2.0 * u).ln()
    } else {
        -scale * (2.0 * (1.0 - u)).ln()
    }
}

/// Draws `Laplace(0, scale)` from `stream` and advances it.
pub fn sample_laplace(scale: f64, stream: &mut NoiseStream) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(invalid!(
            "Laplace scale must be positive and finite, got {scale}"
        ));
    }
    Ok(stream.next_laplace(scale))
}

/// Per-key charge counters with budget `r`. Keys never touched have count 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChargeLedger {
    r: u32,
    charges: HashMap<Key, u32>,
}

impl ChargeLedger {
    pub fn new(r: u32) -> Result<Self> {
        if r == 0 {
            return Err(invalid!("per-key budget r must be at least 1"));
        }
        Ok(Self {
            r,
            charges: HashMap::new(),
        })
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn charge(&self, key: Key) -> u32 {
        self.charges.get(&key).copied().unwrap_or(0)
    }

    pub fn is_active(&self, key: Key) -> bool {
        self.charge(key) < self.r
    }

    /// Adds one charge to `key` unless it is already at the budget.
    /// Returns whether a charge was recorded.
    pub fn charge_once(&mut self, key: Key) -> bool {
        let c = self.charges.entry(key).or_insert(0);
        if *c < self.r {
            *c += 1;
            true
        } else {
            false
        }
    }

    /// Number of keys that reached the budget.
    pub fn deactivated_count(&self) -> usize {
        self.charges.values().filter(|&&c| c >= self.r).count()
    }

    /// Touched keys with their counts, sorted by key.
    pub fn sorted_charges(&self) -> Vec<(Key, u32)> {
        let mut v: Vec<(Key, u32)> = self
            .charges
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(&k, &c)| (k, c))
            .collect();
        v.sort_unstable();
        v
    }

    pub fn to_json(&self) -> String {
        let snap = LedgerSnapshot {
            r: self.r,
            charges: self
                .sorted_charges()
                .into_iter()
                .map(|(k, c)| (k.0, c))
                .collect(),
        };
        serde_json::to_string(&snap).expect("ledger serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let snap: LedgerSnapshot = serde_json::from_str(text)?;
        let mut ledger = ChargeLedger::new(snap.r)?;
        for (key, count) in snap.charges {
            if count > snap.r {
                return Err(invalid!(
                    "charge {count} of key {key} exceeds budget {}",
                    snap.r
                ));
            }
            if ledger.charges.insert(Key(key), count).is_some() {
                return Err(invalid!("duplicate key {key} in ledger snapshot"));
            }
        }
        Ok(ledger)
    }
}

#[derive(Serialize, Deserialize)]
struct LedgerSnapshot {
    r: u32,
    charges: Vec<(u64, u32)>,
}

/// A threshold test: indicator contributions per key, threshold and epsilon.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdQuery {
    contributions: Vec<(Key, bool)>,
    threshold: f64,
    epsilon: f64,
}

impl ThresholdQuery {
    pub fn new(contributions: Vec<(Key, bool)>, threshold: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid!(
                "epsilon must be positive and finite, got {epsilon}"
            ));
        }
        if threshold.is_nan() {
            return Err(invalid!("threshold must not be NaN"));
        }
        let mut keys: Vec<Key> = contributions.iter().map(|c| c.0).collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid!(
                "a key contributes more than once to a threshold query"
            ));
        }
        Ok(Self {
            contributions,
            threshold,
            epsilon,
        })
    }

    pub fn contributions(&self) -> &[(Key, bool)] {
        &self.contributions
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Result of one threshold test. `result` is `None` for a below-threshold (⊥)
/// outcome and the noisy count otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOutcome {
    pub result: Option<f64>,
    pub noise_used: f64,
}

impl ThresholdOutcome {
    pub fn is_positive(&self) -> bool {
        self.result.is_some()
    }
}

/// Noisy count `raw + noise` tested against `threshold`.
#[inline]
pub(crate) fn threshold_test(raw: f64, threshold: f64, noise: f64) -> ThresholdOutcome {
    let noisy = raw + noise;
    ThresholdOutcome {
        result: (noisy >= threshold).then_some(noisy),
        noise_used: noise,
    }
}

/// AboveThreshold over the active keys of `ledger`, charging contributors on
/// a positive outcome.
pub fn above_threshold(
    ledger: &mut ChargeLedger,
    query: &ThresholdQuery,
    stream: &mut NoiseStream,
) -> ThresholdOutcome {
    let raw = query
        .contributions
        .iter()
        .filter(|(key, bit)| *bit && ledger.is_active(*key))
        .count();
    let noise = stream.next_laplace(1.0 / query.epsilon);
    let outcome = threshold_test(raw as f64, query.threshold, noise);
    if outcome.is_positive() {
        for &(key, bit) in &query.contributions {
            if bit {
                ledger.charge_once(key);
            }
        }
    }
    outcome
}

/// An `(epsilon, delta)` privacy guarantee.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpGuarantee {
    pub epsilon: f64,
    pub delta: f64,
}

/// Privacy of `r`-bounded individual charging with per-test `epsilon`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBounds {
    pub pure: DpGuarantee,
    pub approx: DpGuarantee,
    pub q: f64,
    pub delta_star: f64,
}

/// Closed-form privacy bounds for budget `r`, per-test `epsilon`, slack
/// `alpha` and target `delta`. Logarithms are natural.
pub fn privacy_bounds(r: u32, epsilon: f64, alpha: f64, delta: f64) -> Result<PrivacyBounds> {
    if r == 0 {
        return Err(invalid!("r must be at least 1"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid!(
            "epsilon must be positive and finite, got {epsilon}"
        ));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid!("alpha must be positive and finite, got {alpha}"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid!("delta must lie in (0, 1), got {delta}"));
    }
    let r = f64::from(r);
    let q = 1.0 / (epsilon.exp() + 1.0);
    let delta_star = (-(alpha * alpha) / (2.0 * (1.0 + alpha)) * r).exp();
    let load = (1.0 + alpha) * r / q;
    let pure = DpGuarantee {
        epsilon: load * epsilon,
        delta: delta_star,
    };
    let approx = DpGuarantee {
        epsilon: 0.5 * load * epsilon * epsilon + epsilon * (load * (1.0 / delta).ln()).sqrt(),
        delta: delta + delta_star,
    };
    Ok(PrivacyBounds {
        pure,
        approx,
        q,
        delta_star,
    })
}

/// Per-test privacy parameter of the robust estimators:
/// `(alpha/d) / (4 sqrt(r ln(n/(beta/4))))` with `d` = 8 (basic) or 16 (tracking).
pub fn epsilon_for_budget(r: u32, alpha: f64, beta: f64, n: u64, variant: Variant) -> Result<f64> {
    if r == 0 {
        return Err(invalid!("r must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid!("alpha must lie in (0, 1), got {alpha}"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid!("beta must lie in (0, 1), got {beta}"));
    }
    if n < 2 {
        return Err(invalid!("universe size n must be at least 2"));
    }
    let log_term = (n as f64 / (beta / 4.0)).ln();
    Ok((alpha / variant.alpha_divisor()) / (4.0 * (f64::from(r) * log_term).sqrt()))
}
