//! Robust cardinality estimators over bottom-k sketches.
//!
//! Both estimators sweep a threshold `tau` upward from `k/(2n)` in geometric
//! steps and stop at the first noisy count of sketch priorities below `tau`
//! that clears the threshold `T`, answering `T/tau`. The basic estimator is
//! stateless. The tracking estimator also keeps a server-side charge ledger
//! and excludes keys that were charged `r` times.

use serde::{Deserialize, Serialize};

use crate::dp::{
    epsilon_for_budget, threshold_test, ChargeLedger, NoiseStream, ThresholdOutcome, Variant,
};
use crate::error::{invalid, Error, Result};
use crate::sketch::{fingerprint, std_estimate, BottomKSketch, CardinalityEstimate};

pub const DEFAULT_K_CONSTANT: f64 = 0.05;

/// How the per-test privacy parameter is set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseCalibration {
    /// `epsilon_for_budget` as is; sized for the worst-case sketch constant.
    Analytic,
    /// Same functional form, with the leading constant matched to `k_constant`
    /// so that the Laplace deviation fits the accuracy slack at
    /// `k = required_k(k_constant)`.
    #[default]
    Sized,
}

/// Estimator parameters as read from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub k: usize,
    pub r: u32,
    pub n: u64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k_constant")]
    pub k_constant: f64,
    #[serde(default)]
    pub noise: NoiseCalibration,
}

fn default_variant() -> Variant {
    Variant::Basic
}

fn default_k_constant() -> f64 {
    DEFAULT_K_CONSTANT
}

impl EstimatorSpec {
    pub fn new(k: usize, r: u32, n: u64, alpha: f64, beta: f64, variant: Variant) -> Self {
        Self {
            k,
            r,
            n,
            alpha,
            beta,
            variant,
            seed: 0,
            k_constant: DEFAULT_K_CONSTANT,
            noise: NoiseCalibration::default(),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn k_constant(mut self, c: f64) -> Self {
        self.k_constant = c;
        self
    }

    pub fn noise(mut self, noise: NoiseCalibration) -> Self {
        self.noise = noise;
        self
    }

    pub fn build(self) -> Result<EstimatorConfig> {
        EstimatorConfig::new(self)
    }
}

/// Validated estimator parameters with the derived per-test epsilon.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    spec: EstimatorSpec,
    epsilon0: f64,
    fingerprint: u64,
}

impl EstimatorConfig {
    pub fn new(spec: EstimatorSpec) -> Result<Self> {
        if spec.k == 0 {
            return Err(invalid!("k must be at least 1"));
        }
        if !(spec.alpha > 0.0 && spec.alpha <= 0.5) {
            return Err(invalid!("alpha must lie in (0, 0.5], got {}", spec.alpha));
        }
        if !(spec.k_constant > 0.0 && spec.k_constant.is_finite()) {
            return Err(invalid!(
                "k_constant must be positive, got {}",
                spec.k_constant
            ));
        }
        let analytic = epsilon_for_budget(spec.r, spec.alpha, spec.beta, spec.n, spec.variant)?;
        let epsilon0 = match spec.noise {
            NoiseCalibration::Analytic => analytic,
            NoiseCalibration::Sized => {
                analytic * analytic_k_constant(spec.variant) / spec.k_constant
            }
        };
        let needed = required_k(spec.alpha, spec.r, spec.n, spec.beta, spec.k_constant)?;
        if (spec.k as u64) < needed {
            log::warn!(
                "k = {} is below the recommended {} for alpha = {}, r = {}, n = {}, beta = {}",
                spec.k,
                needed,
                spec.alpha,
                spec.r,
                spec.n,
                spec.beta
            );
        }
        let fingerprint = fingerprint(spec.seed, spec.n);
        Ok(Self {
            spec,
            epsilon0,
            fingerprint,
        })
    }

    pub fn spec(&self) -> &EstimatorSpec {
        &self.spec
    }

    pub fn k(&self) -> usize {
        self.spec.k
    }

    pub fn r(&self) -> u32 {
        self.spec.r
    }

    pub fn n(&self) -> u64 {
        self.spec.n
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    pub fn beta(&self) -> f64 {
        self.spec.beta
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn epsilon0(&self) -> f64 {
        self.epsilon0
    }

    /// Fingerprint of the sketching randomness this config is bound to.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn check(&self, s: &BottomKSketch) -> Result<()> {
        if s.fingerprint() != self.fingerprint {
            return Err(Error::IncompatibleSketches(format!(
                "sketch fingerprint {:016x} does not match estimator randomness {:016x}",
                s.fingerprint(),
                self.fingerprint
            )));
        }
        if s.k() != self.spec.k {
            return Err(Error::IncompatibleSketches(format!(
                "sketch capacity {} differs from estimator k = {}",
                s.k(),
                self.spec.k
            )));
        }
        Ok(())
    }

    fn start_tau(&self) -> f64 {
        self.spec.k as f64 / (2.0 * self.spec.n as f64)
    }
}

/// Sketch-size constant at which `epsilon_for_budget` leaves exactly the
/// accuracy slack for its Laplace deviation: `4 d^2` for alpha divisor `d`.
pub fn analytic_k_constant(variant: Variant) -> f64 {
    let d = variant.alpha_divisor();
    4.0 * d * d
}

/// Everything one robust query tested.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RobustQueryTrace {
    pub taus_tested: Vec<f64>,
    pub noisy_counts: Vec<ThresholdOutcome>,
    /// `None` for exact answers, which run no threshold tests.
    pub final_tau: Option<f64>,
    pub threshold: Option<f64>,
    pub output: Option<CardinalityEstimate>,
}

/// Deactivation state of the queried sketch, measured before charging.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackingDiagnostics {
    pub deactivated: usize,
    /// `deactivated <= alpha k / 4`: the accuracy guarantee applies.
    pub accurate: bool,
    /// `deactivated > k / 2`: outside the tracking guarantee.
    pub degraded: bool,
}

impl TrackingDiagnostics {
    fn new(deactivated: usize, k: usize, alpha: f64) -> Self {
        Self {
            deactivated,
            accurate: deactivated as f64 <= alpha * k as f64 / 4.0,
            degraded: deactivated as f64 > k as f64 / 2.0,
        }
    }
}

/// Geometric threshold sweep shared by both estimators. `count` returns the
/// raw count below `tau`; it is called with non-decreasing `tau`.
fn sweep<F>(
    start: f64,
    ratio: f64,
    threshold: f64,
    epsilon0: f64,
    stream: &mut NoiseStream,
    mut count: F,
) -> (CardinalityEstimate, RobustQueryTrace)
where
    F: FnMut(f64) -> usize,
{
    let scale = 1.0 / epsilon0;
    let mut trace = RobustQueryTrace {
        threshold: Some(threshold),
        ..Default::default()
    };
    let mut tau = start;
    let mut saturated = true;
    while tau < 1.0 {
        let noise = stream.next_laplace(scale);
        let outcome = threshold_test(count(tau) as f64, threshold, noise);
        trace.taus_tested.push(tau);
        trace.noisy_counts.push(outcome);
        if outcome.is_positive() {
            saturated = false;
            break;
        }
        tau *= ratio;
    }
    let value = threshold / tau;
    let est = if saturated {
        CardinalityEstimate::saturated(value)
    } else {
        CardinalityEstimate::approximate(value)
    };
    trace.final_tau = Some(tau);
    trace.output = Some(est);
    (est, trace)
}

fn exact_trace(est: CardinalityEstimate) -> RobustQueryTrace {
    RobustQueryTrace {
        output: Some(est),
        ..Default::default()
    }
}

/// Basic robust estimate: threshold `(1-alpha)k`, step `1 + alpha/4`.
pub fn robust_estimate(
    cfg: &EstimatorConfig,
    s: &BottomKSketch,
    stream: &mut NoiseStream,
) -> Result<(CardinalityEstimate, RobustQueryTrace)> {
    cfg.check(s)?;
    if s.len() < s.k() {
        let est = CardinalityEstimate::exact(s.len());
        return Ok((est, exact_trace(est)));
    }
    let k = cfg.k() as f64;
    let alpha = cfg.alpha();
    Ok(sweep(
        cfg.start_tau(),
        1.0 + alpha / 4.0,
        (1.0 - alpha) * k,
        cfg.epsilon0,
        stream,
        |tau| s.count_below(tau),
    ))
}

/// Tracking robust estimate: threshold `k/4`, step `1 + alpha/8`, counting
/// only active sketch entries, then charging every entry below the final tau.
pub fn tracking_estimate(
    cfg: &EstimatorConfig,
    s: &BottomKSketch,
    ledger: &mut ChargeLedger,
    stream: &mut NoiseStream,
) -> Result<(CardinalityEstimate, RobustQueryTrace, TrackingDiagnostics)> {
    cfg.check(s)?;
    if ledger.r() != cfg.r() {
        return Err(invalid!(
            "ledger budget {} differs from estimator r = {}",
            ledger.r(),
            cfg.r()
        ));
    }
    let deactivated = s.keys().filter(|&key| !ledger.is_active(key)).count();
    let diag = TrackingDiagnostics::new(deactivated, cfg.k(), cfg.alpha());
    if s.len() < s.k() {
        let est = CardinalityEstimate::exact(s.len());
        return Ok((est, exact_trace(est), diag));
    }

    let active: Vec<f64> = s
        .entries()
        .iter()
        .filter(|e| ledger.is_active(e.key))
        .map(|e| e.priority)
        .collect();
    let mut below = 0usize;
    let (est, trace) = sweep(
        cfg.start_tau(),
        1.0 + cfg.alpha() / 8.0,
        cfg.k() as f64 / 4.0,
        cfg.epsilon0,
        stream,
        |tau| {
            while below < active.len() && active[below] < tau {
                below += 1;
            }
            below
        },
    );
    let final_tau = trace.final_tau.expect("sweep sets the final tau");
    for e in s.entries() {
        if e.priority < final_tau {
            ledger.charge_once(e.key);
        }
    }
    Ok((est, trace, diag))
}

/// Recommended sketch size `ceil(C alpha^-2 sqrt(r) ln^{3/2}(n/beta))`.
pub fn required_k(alpha: f64, r: u32, n: u64, beta: f64, k_constant: f64) -> Result<u64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid!("alpha must lie in (0, 1), got {alpha}"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid!("beta must lie in (0, 1), got {beta}"));
    }
    if r == 0 || n < 1 {
        return Err(invalid!("r and n must be at least 1"));
    }
    if !(k_constant > 0.0 && k_constant.is_finite()) {
        return Err(invalid!("k_constant must be positive, got {k_constant}"));
    }
    let log_term = (n as f64 / beta).ln();
    let k = k_constant * f64::from(r).sqrt() * log_term.powf(1.5) / (alpha * alpha);
    Ok(k.ceil() as u64)
}

/// Error budget `alpha E + c alpha^-1 sqrt(r) ln^{3/2}(m n / beta)` of a
/// noisy count with expectation `E` over `m` queries. Diagnostic only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub delta: f64,
    pub queries: u64,
}

impl ErrorBudget {
    pub fn new(
        alpha: f64,
        expected: f64,
        queries: u64,
        n: u64,
        beta: f64,
        r: u32,
        c: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && beta < 1.0 && c > 0.0 && expected >= 0.0) {
            return Err(invalid!("error budget parameters out of range"));
        }
        if queries == 0 || n == 0 || r == 0 {
            return Err(invalid!("queries, n and r must be at least 1"));
        }
        let log_term = (queries as f64 * n as f64 / beta).ln().max(0.0);
        let delta = alpha * expected + c * f64::from(r).sqrt() * log_term.powf(1.5) / alpha;
        Ok(Self { delta, queries })
    }
}

/// Answer of a query responder, as written by the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub estimate: f64,
    pub exact: bool,
    pub saturated: bool,
    pub deactivated: Option<usize>,
}

impl Response {
    fn plain(est: CardinalityEstimate) -> Self {
        Self {
            estimate: est.value,
            exact: est.exact,
            saturated: est.saturated,
            deactivated: None,
        }
    }
}

/// A stateful query responder wrapping one of the estimators.
#[derive(Clone, Debug)]
pub enum Responder {
    Standard,
    Basic {
        cfg: EstimatorConfig,
        noise: NoiseStream,
    },
    Tracking {
        cfg: EstimatorConfig,
        ledger: ChargeLedger,
        noise: NoiseStream,
    },
}

impl Responder {
    /// Responder for `cfg.variant()`, with noise derived from `cfg.seed()`.
    pub fn robust(cfg: EstimatorConfig) -> Result<Self> {
        let noise = NoiseStream::new(cfg.seed());
        Ok(match cfg.variant() {
            Variant::Basic => Responder::Basic { cfg, noise },
            Variant::Tracking => {
                let ledger = ChargeLedger::new(cfg.r())?;
                Responder::Tracking { cfg, ledger, noise }
            }
        })
    }

    pub fn respond(&mut self, s: &BottomKSketch) -> Result<Response> {
        match self {
            Responder::Standard => Ok(Response::plain(std_estimate(s))),
            Responder::Basic { cfg, noise } => {
                Ok(Response::plain(robust_estimate(cfg, s, noise)?.0))
            }
            Responder::Tracking { cfg, ledger, noise } => {
                let (est, _, diag) = tracking_estimate(cfg, s, ledger, noise)?;
                Ok(Response {
                    deactivated: Some(diag.deactivated),
                    ..Response::plain(est)
                })
            }
        }
    }

    pub fn ledger(&self) -> Option<&ChargeLedger> {
        match self {
            Responder::Tracking { ledger, .. } => Some(ledger),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::{sketch_set, Entry, Key, SketchRandomness};

    fn handmade(priorities: &[f64], k: usize, cfg: &EstimatorConfig) -> BottomKSketch {
        let entries = priorities
            .iter()
            .enumerate()
            .map(|(i, &p)| Entry {
                key: Key(i as u64),
                priority: p,
            })
            .collect();
        BottomKSketch::from_parts(k, cfg.fingerprint(), entries).unwrap()
    }

    fn cfg(variant: Variant) -> EstimatorConfig {
        EstimatorSpec::new(4, 2, 16, 0.25, 0.1, variant)
            .build()
            .unwrap()
    }

    #[test]
    fn small_sketch_is_exact() {
        let c = cfg(Variant::Basic);
        let s = handmade(&[0.1, 0.2], 4, &c);
        let (est, trace) = robust_estimate(&c, &s, &mut NoiseStream::pinned(0.0)).unwrap();
        assert_eq!(est, CardinalityEstimate::exact(2));
        assert!(trace.taus_tested.is_empty());
    }

    #[test]
    fn basic_hand_trace() {
        let c = EstimatorSpec::new(4, 2, 16, 0.5, 0.1, Variant::Basic)
            .build()
            .unwrap();
        let s = handmade(&[0.05, 0.10, 0.15, 0.20], 4, &c);
        let (est, trace) = robust_estimate(&c, &s, &mut NoiseStream::pinned(0.0)).unwrap();
        assert_eq!(trace.taus_tested, vec![0.125]);
        assert_eq!(trace.threshold, Some(2.0));
        assert_eq!(est, CardinalityEstimate::approximate(16.0));
    }

    #[test]
    fn tracking_hand_trace() {
        let c = EstimatorSpec::new(4, 2, 16, 0.5, 0.1, Variant::Tracking)
            .build()
            .unwrap();
        let s = handmade(&[0.05, 0.10, 0.15, 0.20], 4, &c);
        let mut ledger = ChargeLedger::new(2).unwrap();
        let (est, trace, diag) =
            tracking_estimate(&c, &s, &mut ledger, &mut NoiseStream::pinned(0.0)).unwrap();
        assert_eq!(trace.threshold, Some(1.0));
        assert_eq!(est, CardinalityEstimate::approximate(8.0));
        assert_eq!(diag.deactivated, 0);
        assert_eq!(ledger.sorted_charges(), vec![(Key(0), 1), (Key(1), 1)]);
    }

    #[test]
    fn saturation_is_flagged() {
        let c = cfg(Variant::Basic);
        let s = handmade(&[0.9, 0.95, 0.97, 0.99], 4, &c);
        let (est, trace) = robust_estimate(&c, &s, &mut NoiseStream::pinned(-1e9)).unwrap();
        assert!(est.saturated);
        assert!(trace.final_tau.unwrap() >= 1.0);
        assert!(trace.noisy_counts.iter().all(|o| !o.is_positive()));
        assert_eq!(
            est.value,
            trace.threshold.unwrap() / trace.final_tau.unwrap()
        );
    }

    #[test]
    fn fingerprint_mismatch_is_rejected() {
        let c = cfg(Variant::Basic);
        let other = SketchRandomness::new(99, 16).unwrap();
        let s = sketch_set(&other, (0..16).map(Key), 4).unwrap();
        assert!(matches!(
            robust_estimate(&c, &s, &mut NoiseStream::pinned(0.0)),
            Err(Error::IncompatibleSketches(_))
        ));
    }

    #[test]
    fn tracking_requires_matching_budget() {
        let c = cfg(Variant::Tracking);
        let s = handmade(&[0.05, 0.10, 0.15, 0.20], 4, &c);
        let mut ledger = ChargeLedger::new(3).unwrap();
        assert!(tracking_estimate(&c, &s, &mut ledger, &mut NoiseStream::pinned(0.0)).is_err());
    }

    #[test]
    fn deactivated_entries_do_not_count() {
        let c = cfg(Variant::Tracking);
        let s = handmade(&[0.05, 0.10, 0.15, 0.20], 4, &c);
        let mut ledger = ChargeLedger::new(2).unwrap();
        ledger.charge_once(Key(0));
        ledger.charge_once(Key(0));
        let (_, trace, diag) =
            tracking_estimate(&c, &s, &mut ledger, &mut NoiseStream::pinned(0.0)).unwrap();
        assert_eq!(diag.deactivated, 1);
        // tau0 = 0.125: only key 1 is active below it, count 1 >= T = 1.
        assert_eq!(trace.noisy_counts[0].result, Some(1.0));
        assert_eq!(ledger.charge(Key(1)), 1);
        assert_eq!(ledger.charge(Key(0)), 2);
    }

    #[test]
    fn required_k_worked_value() {
        assert_eq!(required_k(0.5, 100, 1_000_000, 0.1, 1.0).unwrap(), 2589);
        let a = required_k(0.2, 100, 1_000_000, 0.1, 1.0).unwrap() as f64;
        let b = required_k(0.1, 100, 1_000_000, 0.1, 1.0).unwrap() as f64;
        assert!((b / a - 4.0).abs() < 1e-3);
        assert!(required_k(0.5, 101, 1_000_000, 0.1, 1.0).unwrap() >= 2589);
        assert!(required_k(0.0, 100, 10, 0.1, 1.0).is_err());
    }

    #[test]
    fn sized_noise_rescales_the_analytic_epsilon() {
        let spec = EstimatorSpec::new(1024, 2000, 100_000, 0.3, 0.1, Variant::Basic);
        let analytic = spec
            .clone()
            .noise(NoiseCalibration::Analytic)
            .build()
            .unwrap();
        let sized = spec.k_constant(0.05).build().unwrap();
        let ratio = sized.epsilon0() / analytic.epsilon0();
        assert!((ratio - 256.0 / 0.05).abs() < 1e-6);
        assert_eq!(
            analytic.epsilon0(),
            epsilon_for_budget(2000, 0.3, 0.1, 100_000, Variant::Basic).unwrap()
        );
    }

    #[test]
    fn error_budget_is_positive() {
        let b = ErrorBudget::new(0.2, 100.0, 1000, 10_000, 0.1, 50, 1.0).unwrap();
        assert!(b.delta > 20.0);
        assert!(ErrorBudget::new(0.2, 100.0, 0, 10_000, 0.1, 50, 1.0).is_err());
    }
}
