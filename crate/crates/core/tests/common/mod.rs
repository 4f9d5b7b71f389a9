//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

/// Direct transliteration of AboveThreshold with individual charging: a
/// counter per index, a budget `r`, and one noisy test per call.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChargingOracle {
    pub r: u32,
    pub counters: Vec<u32>,
}

impl ChargingOracle {
    pub fn new(n: usize, r: u32) -> Self {
        Self {
            r,
            counters: vec![0; n],
        }
    }

    /// Returns the noisy sum on a positive test and `None` otherwise.
    pub fn test(&mut self, h: &[bool], threshold: f64, noise: f64) -> Option<f64> {
        let mut sum = 0.0;
        for (i, &hi) in h.iter().enumerate() {
            if hi && self.counters[i] < self.r {
                sum += 1.0;
            }
        }
        let noisy = sum + noise;
        if noisy >= threshold {
            for (i, &hi) in h.iter().enumerate() {
                if hi && self.counters[i] < self.r {
                    self.counters[i] += 1;
                }
            }
            Some(noisy)
        } else {
            None
        }
    }
}

/// Independent evaluation of the privacy bounds of `r`-bounded charging:
/// `(pure_eps, pure_delta, approx_eps, approx_delta)`.
pub fn privacy_reference(r: f64, eps: f64, alpha: f64, delta: f64) -> (f64, f64, f64, f64) {
    let q = 1.0 / (1.0 + eps.exp());
    let m = r * (1.0 + alpha) / q;
    let dstar = (-alpha * alpha * r / (2.0 * (1.0 + alpha))).exp();
    let pure = m * eps;
    let approx = m * eps * eps / 2.0 + eps * (2.0 * m * (1.0 / delta).ln()).sqrt() / 2f64.sqrt();
    (pure, dstar, approx, delta + dstar)
}

/// Relative agreement to `digits` significant digits.
pub fn agrees(a: f64, b: f64, digits: i32) -> bool {
    let scale = a.abs().max(b.abs());
    scale == 0.0 || (a - b).abs() <= scale * 10f64.powi(-digits) * 0.5
}
