//! Bottom-k sketching map, composable merge and the standard estimator.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed::{self, domain};

/// A key of the ground set `[0, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Key(pub u64);

impl From<u64> for Key {
    fn from(id: u64) -> Self {
        Key(id)
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// The randomness of the sketching map: a seeded hash `key -> priority`.
///
/// Priorities lie in `[0, 1)` with 53-bit resolution and are a pure
/// function of `(seed, key)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SketchRandomness {
    seed: u64,
    n: u64,
    key_a: u64,
    key_b: u64,
}

impl SketchRandomness {
    pub fn new(seed: u64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(invalid!("ground-set size n must be at least 1"));
        }
        Ok(Self {
            seed,
            n,
            key_a: seed::derive(seed, domain::PRIORITY, 0),
            key_b: seed::derive(seed, domain::PRIORITY, 1),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Fingerprint of `(seed, n)` carried by every sketch built from this map.
    pub fn fingerprint(&self) -> u64 {
        fingerprint(self.seed, self.n)
    }

    pub fn priority(&self, key: Key) -> Result<f64> {
        self.check(key)?;
        Ok(bits_to_priority(self.priority_bits(key.0)))
    }

    /// Priorities of the whole ground set, indexed by key id.
    pub fn priorities(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| bits_to_priority(self.priority_bits(i)))
            .collect()
    }

    #[inline]
    fn check(&self, key: Key) -> Result<()> {
        if key.0 >= self.n {
            return Err(invalid!("key {} out of range for n = {}", key.0, self.n));
        }
        Ok(())
    }

    /// 53-bit integer priority; the real priority is this value times 2^-53.
    #[inline]
    fn priority_bits(&self, id: u64) -> u64 {
        let z = seed::mix64(self.key_a ^ id.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        seed::mix64(z ^ self.key_b) >> 11
    }
}

/// Fingerprint binding a sketch to the `(seed, n)` pair of its randomness.
pub fn fingerprint(seed: u64, n: u64) -> u64 {
    seed::derive(seed, domain::FINGERPRINT, n)
}

#[inline]
fn bits_to_priority(bits: u64) -> f64 {
    bits as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One `(key, priority)` pair of a sketch.
#[derive(Clone, Copy, Debug)]
pub struct Entry {
    pub key: Key,
    pub priority: f64,
}

impl Entry {
    #[inline]
    fn order(&self) -> (u64, u64) {
        (self.priority.to_bits(), self.key.0)
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.order() == other.order()
    }
}

impl Eq for Entry {}

/// The at most `k` lowest-priority members of a set, sorted ascending by
/// `(priority, key)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BottomKSketch {
    k: usize,
    fingerprint: u64,
    entries: Vec<Entry>,
}

impl BottomKSketch {
    /// Sketch of the empty set.
    pub fn empty(rand: &SketchRandomness, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid!("sketch capacity k must be at least 1"));
        }
        Ok(Self {
            k,
            fingerprint: rand.fingerprint(),
            entries: Vec::new(),
        })
    }

    /// Rebuilds a sketch from raw parts, validating every invariant.
    pub fn from_parts(k: usize, fingerprint: u64, entries: Vec<Entry>) -> Result<Self> {
        if k == 0 {
            return Err(invalid!("sketch capacity k must be at least 1"));
        }
        if entries.len() > k {
            return Err(invalid!("{} entries exceed capacity {}", entries.len(), k));
        }
        for e in &entries {
            if !(0.0..1.0).contains(&e.priority) {
                return Err(invalid!(
                    "priority {} of key {} outside [0, 1)",
                    e.priority,
                    e.key
                ));
            }
        }
        for w in entries.windows(2) {
            if w[0].order() >= w[1].order() {
                return Err(invalid!("entries not strictly sorted by (priority, key)"));
            }
        }
        let mut keys: Vec<Key> = entries.iter().map(|e| e.key).collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid!("duplicate key in sketch entries"));
        }
        Ok(Self {
            k,
            fingerprint,
            entries,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = Key> + '_ {
        self.entries.iter().map(|e| e.key)
    }

    /// Largest priority in the sketch; the kth order statistic when full.
    pub fn max_priority(&self) -> Option<f64> {
        self.entries.last().map(|e| e.priority)
    }

    /// Number of entries with priority strictly below `tau`.
    pub fn count_below(&self, tau: f64) -> usize {
        self.entries.partition_point(|e| e.priority < tau)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SketchFile::from(self)).expect("sketch serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SketchFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// Bottom-k sketch of `keys` under `rand`. Duplicate keys are collapsed.
pub fn sketch_set<I>(rand: &SketchRandomness, keys: I, k: usize) -> Result<BottomKSketch>
where
    I: IntoIterator<Item = Key>,
{
    if k == 0 {
        return Err(invalid!("sketch capacity k must be at least 1"));
    }
    let mut best: BTreeSet<(u64, u64)> = BTreeSet::new();
    let mut max: (u64, u64) = (u64::MAX, u64::MAX);
    for key in keys {
        rand.check(key)?;
        let item = (rand.priority_bits(key.0), key.0);
        if best.len() < k {
            best.insert(item);
            if best.len() == k {
                max = *best.last().unwrap();
            }
        } else if item < max && best.insert(item) {
            best.pop_last();
            max = *best.last().unwrap();
        }
    }
    let entries = best
        .into_iter()
        .map(|(bits, id)| Entry {
            key: Key(id),
            priority: bits_to_priority(bits),
        })
        .collect();
    Ok(BottomKSketch {
        k,
        fingerprint: rand.fingerprint(),
        entries,
    })
}

/// Sketch of the union of the sets summarized by `a` and `b`.
pub fn merge(a: &BottomKSketch, b: &BottomKSketch) -> Result<BottomKSketch> {
    if a.k != b.k {
        return Err(Error::IncompatibleSketches(format!(
            "capacities differ ({} vs {})",
            a.k, b.k
        )));
    }
    if a.fingerprint != b.fingerprint {
        return Err(Error::IncompatibleSketches(format!(
            "randomness fingerprints differ ({:016x} vs {:016x})",
            a.fingerprint, b.fingerprint
        )));
    }
    let mut out = Vec::with_capacity(a.k.min(a.len() + b.len()));
    let (mut i, mut j) = (0, 0);
    while out.len() < a.k && (i < a.len() || j < b.len()) {
        let next = match (a.entries.get(i), b.entries.get(j)) {
            (Some(x), Some(y)) => match x.order().cmp(&y.order()) {
                std::cmp::Ordering::Less => {
                    i += 1;
                    *x
                }
                std::cmp::Ordering::Greater => {
                    j += 1;
                    *y
                }
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                    *x
                }
            },
            (Some(x), None) => {
                i += 1;
                *x
            }
            (None, Some(y)) => {
                j += 1;
                *y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    Ok(BottomKSketch {
        k: a.k,
        fingerprint: a.fingerprint,
        entries: out,
    })
}

/// A cardinality estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CardinalityEstimate {
    pub value: f64,
    /// The sketch held fewer than `k` entries and `value` is the exact size.
    pub exact: bool,
    /// A robust estimator's threshold sweep ran out (`tau >= 1`).
    pub saturated: bool,
}

impl CardinalityEstimate {
    pub fn exact(count: usize) -> Self {
        Self {
            value: count as f64,
            exact: true,
            saturated: false,
        }
    }

    pub fn approximate(value: f64) -> Self {
        Self {
            value,
            exact: false,
            saturated: false,
        }
    }

    pub fn saturated(value: f64) -> Self {
        Self {
            value,
            exact: false,
            saturated: true,
        }
    }
}

/// The standard estimator: `|S|` below capacity, otherwise `(k-1)/tau` with
/// `tau` the kth smallest priority.
pub fn std_estimate(s: &BottomKSketch) -> CardinalityEstimate {
    if s.len() < s.k {
        return CardinalityEstimate::exact(s.len());
    }
    let tau = s.max_priority().expect("full sketch is non-empty");
    CardinalityEstimate::approximate((s.k - 1) as f64 / tau)
}

/// On-disk sketch layout. Priorities travel as the hex bit pattern of the `f64`.
#[derive(Serialize, Deserialize)]
struct SketchFile {
    seed_fingerprint: String,
    k: usize,
    entries: Vec<(u64, String)>,
}

impl From<&BottomKSketch> for SketchFile {
    fn from(s: &BottomKSketch) -> Self {
        Self {
            seed_fingerprint: format!("{:016x}", s.fingerprint),
            k: s.k,
            entries: s
                .entries
                .iter()
                .map(|e| (e.key.0, format!("{:016x}", e.priority.to_bits())))
                .collect(),
        }
    }
}

impl TryFrom<SketchFile> for BottomKSketch {
    type Error = Error;

    fn try_from(file: SketchFile) -> Result<Self> {
        let fingerprint = parse_hex64(&file.seed_fingerprint)?;
        let entries = file
            .entries
            .iter()
            .map(|(key, hex)| {
                Ok(Entry {
                    key: Key(*key),
                    priority: f64::from_bits(parse_hex64(hex)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        BottomKSketch::from_parts(file.k, fingerprint, entries)
    }
}

fn parse_hex64(s: &str) -> Result<u64> {
    if s.len() != 16 {
        return Err(Error::Parse(format!("expected 16 hex digits, got {s:?}")));
    }
    u64::from_str_radix(s, 16).map_err(|e| Error::Parse(format!("bad hex {s:?}: {e}")))
}
