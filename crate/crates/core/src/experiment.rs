//! Guaranteed-query experiment for the tracking estimator.
//!
//! For each sketch size `k` the tracking estimator answers a generated
//! workload with per-key budget `r = floor(c k^2)`. A query counts as
//! guaranteed while at most `accurate_threshold * k` of its sketch entries
//! are deactivated; the run stops at the first query with at least
//! `stop_threshold * k` deactivated entries.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::Variant;
use crate::dp::{ChargeLedger, NoiseStream};
use crate::error::{invalid, Error, Result};
use crate::estimators::{tracking_estimate, EstimatorSpec, NoiseCalibration, DEFAULT_K_CONSTANT};
use crate::seed::{self, domain};
use crate::sketch::{sketch_set, SketchRandomness};
use crate::workload::{Distribution, Workload, WorkloadSpec, DEFAULT_QUERY_SIZE, DEFAULT_SUPPORT};

pub const CSV_HEADER: &str = "k,distribution,baseline_queries,robust_queries,gain";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ks: Vec<usize>,
    pub distributions: Vec<Distribution>,
    #[serde(default = "defaults::r_coefficient")]
    pub r_coefficient: f64,
    #[serde(default = "defaults::accurate_threshold")]
    pub accurate_threshold: f64,
    #[serde(default = "defaults::stop_threshold")]
    pub stop_threshold: f64,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::max_queries")]
    pub max_queries: u64,
    #[serde(default = "defaults::trials")]
    pub trials: u32,
    #[serde(default = "defaults::support")]
    pub support: u64,
    #[serde(default = "defaults::query_size")]
    pub query_size: usize,
    #[serde(default = "defaults::k_constant")]
    pub k_constant: f64,
    #[serde(default)]
    pub noise: NoiseCalibration,
}

mod defaults {
    pub fn r_coefficient() -> f64 {
        0.002
    }
    pub fn accurate_threshold() -> f64 {
        0.10
    }
    pub fn stop_threshold() -> f64 {
        0.50
    }
    pub fn alpha() -> f64 {
        0.3
    }
    pub fn beta() -> f64 {
        0.1
    }
    pub fn max_queries() -> u64 {
        1_000_000
    }
    pub fn trials() -> u32 {
        1
    }
    pub fn support() -> u64 {
        super::DEFAULT_SUPPORT
    }
    pub fn query_size() -> usize {
        super::DEFAULT_QUERY_SIZE
    }
    pub fn k_constant() -> f64 {
        super::DEFAULT_K_CONSTANT
    }
}

impl ExperimentConfig {
    /// Default settings for the given sweep.
    pub fn new(ks: Vec<usize>, distributions: Vec<Distribution>) -> Self {
        Self {
            ks,
            distributions,
            r_coefficient: defaults::r_coefficient(),
            accurate_threshold: defaults::accurate_threshold(),
            stop_threshold: defaults::stop_threshold(),
            alpha: defaults::alpha(),
            beta: defaults::beta(),
            seed: 0,
            max_queries: defaults::max_queries(),
            trials: defaults::trials(),
            support: defaults::support(),
            query_size: defaults::query_size(),
            k_constant: defaults::k_constant(),
            noise: NoiseCalibration::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.distributions.is_empty() {
            return Err(invalid!(
                "the sweep needs at least one k and one distribution"
            ));
        }
        if self.ks.contains(&0) {
            return Err(invalid!("k must be at least 1"));
        }
        let (acc, stop) = (self.accurate_threshold, self.stop_threshold);
        if !(0.0 < acc && acc < stop && stop <= 1.0) {
            return Err(invalid!(
                "thresholds must satisfy 0 < accurate ({acc}) < stop ({stop}) <= 1"
            ));
        }
        if !(self.r_coefficient > 0.0 && self.r_coefficient.is_finite()) {
            return Err(invalid!(
                "r coefficient must be positive, got {}",
                self.r_coefficient
            ));
        }
        if self.trials == 0 || self.max_queries == 0 {
            return Err(invalid!("trials and max_queries must be at least 1"));
        }
        Ok(())
    }

    /// `floor(c k^2)`, both the per-key budget and the baseline allotment.
    pub fn budget(&self, k: usize) -> u64 {
        (self.r_coefficient * (k as f64) * (k as f64)).floor() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub k: usize,
    pub distribution: String,
    pub trial: u32,
    pub baseline_queries: u64,
    pub robust_queries: u64,
    /// Queries answered before the stop condition or the cap.
    pub queries_run: u64,
    pub gain: f64,
    /// The run reached `max_queries`; `gain` is then a lower bound.
    pub capped: bool,
}

/// Runs every (distribution, k, trial) cell, in parallel, sorted by
/// distribution label, then k, then trial.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for dist in &cfg.distributions {
        for &k in &cfg.ks {
            for trial in 0..cfg.trials {
                jobs.push((*dist, k, trial));
            }
        }
    }
    let mut rows = jobs
        .into_par_iter()
        .map(|(dist, k, trial)| {
            run_cell(cfg, dist, k, trial).map_err(|e| Error::Experiment {
                k,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        (a.distribution.as_str(), a.k, a.trial).cmp(&(b.distribution.as_str(), b.k, b.trial))
    });
    Ok(rows)
}

fn run_cell(
    cfg: &ExperimentConfig,
    dist: Distribution,
    k: usize,
    trial: u32,
) -> Result<ExperimentRow> {
    let master = seed::derive(cfg.seed, domain::EXPERIMENT, u64::from(trial));
    let budget = cfg.budget(k);
    let r = u32::try_from(budget)
        .ok()
        .filter(|&r| r >= 1)
        .ok_or_else(|| invalid!("budget floor(c k^2) = {budget} is not a usable r"))?;
    let est = EstimatorSpec::new(k, r, cfg.support, cfg.alpha, cfg.beta, Variant::Tracking)
        .seed(master)
        .k_constant(cfg.k_constant)
        .noise(cfg.noise)
        .build()?;
    let rand = SketchRandomness::new(master, cfg.support)?;
    let workload = Workload::new(WorkloadSpec {
        distribution: dist,
        support: cfg.support,
        query_size: cfg.query_size,
        num_queries: cfg.max_queries,
        seed: master,
    })?;
    let mut ledger = ChargeLedger::new(r)?;
    let mut noise = NoiseStream::new(master);

    let accurate = cfg.accurate_threshold * k as f64;
    let stop = cfg.stop_threshold * k as f64;
    let mut robust = 0u64;
    let mut run = 0u64;
    let mut stopped = false;
    for query in workload {
        let s = sketch_set(&rand, query, k)?;
        let (_, _, diag) = tracking_estimate(&est, &s, &mut ledger, &mut noise)?;
        let d = diag.deactivated as f64;
        if d >= stop {
            stopped = true;
            break;
        }
        run += 1;
        if d <= accurate {
            robust += 1;
        }
    }
    let gain = if budget == 0 {
        f64::INFINITY
    } else {
        robust as f64 / budget as f64
    };
    log::info!(
        "{} k={k} trial={trial}: {robust} guaranteed of {run} answered, gain {gain:.2}",
        dist.label()
    );
    Ok(ExperimentRow {
        k,
        distribution: dist.label(),
        trial,
        baseline_queries: budget,
        robust_queries: robust,
        queries_run: run,
        gain,
        capped: !stopped,
    })
}

pub fn write_csv<W: Write>(rows: &[ExperimentRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.k, row.distribution, row.baseline_queries, row.robust_queries, row.gain
        )?;
    }
    Ok(())
}

/// Config and per-trial rows, including the cap marker.
#[derive(Serialize)]
pub struct Sidecar<'a> {
    pub config: &'a ExperimentConfig,
    pub rows: &'a [ExperimentRow],
}
