//! Seed mixing and domain-separated seed derivation.
//!
//! Every random stream in the crate (sketch priorities, Laplace noise,
//! workload sampling, attack partitions) is derived from one master seed
//! plus a domain tag, so that streams with different tags are independent.

/// Finalizer of SplitMix64. Bijective on `u64` with full avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Domain tags used for seed derivation.
pub mod domain {
    pub const PRIORITY: &str = "bottomk/priority";
    pub const FINGERPRINT: &str = "bottomk/fingerprint";
    pub const NOISE: &str = "bottomk/noise";
    pub const WORKLOAD: &str = "bottomk/workload";
    pub const WEIGHTS: &str = "bottomk/weights";
    pub const ATTACK: &str = "bottomk/attack";
    pub const EXPERIMENT: &str = "bottomk/experiment";
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a, then mixed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

/// Derives an independent seed for `tag` and stream `index` from `master`.
pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    let a = mix64(master ^ tag_hash(tag));
    mix64(a.wrapping_add(mix64(index.wrapping_add(1).wrapping_mul(GOLDEN))))
}

/// Maps the top 53 bits of `bits` to `[0, 1)`.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Maps the top 52 bits of `bits` to the open interval `(0, 1)`.
#[inline]
pub fn open_unit_f64(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}
