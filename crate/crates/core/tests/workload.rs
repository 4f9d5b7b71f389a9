use bottomk::attack::{attack_standard_estimator, AttackConfig};
use bottomk::workload::{gen_workload, Distribution, WorkloadSpec};
use bottomk::{sketch_set, std_estimate, Key, SketchRandomness};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp1};

/// Inclusion probability of each listed key under exponential-rank sampling,
/// estimated from `sims` independent draws.
fn exponential_rank_inclusion(
    weights: &[f64],
    size: usize,
    targets: &[usize],
    sims: usize,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
    let mut hits = vec![0usize; targets.len()];
    let mut ranks = vec![0.0f64; weights.len()];
    for _ in 0..sims {
        for (rank, &w) in ranks.iter_mut().zip(weights) {
            let e: f64 = Exp1.sample(&mut rng);
            *rank = e / w;
        }
        let mut sorted = ranks.clone();
        sorted.select_nth_unstable_by(size - 1, |a, b| a.total_cmp(b));
        let cutoff = sorted[size - 1];
        for (h, &t) in hits.iter_mut().zip(targets) {
            if ranks[t] <= cutoff {
                *h += 1;
            }
        }
    }
    hits.iter().map(|&h| h as f64 / sims as f64).collect()
}

#[test]
fn pareto_inclusion_matches_exponential_ranks() {
    let spec = WorkloadSpec {
        distribution: Distribution::Pareto { shape: 1.5 },
        support: 10_000,
        query_size: 500,
        num_queries: 1000,
        seed: 17,
    };
    let workload = gen_workload(spec.clone()).unwrap();
    let weights = workload.weights().unwrap().to_vec();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
    // The heaviest key, and keys whose inclusion is far from 0 and 1.
    let targets = [order[0], order[200], order[1000], order[3000]];

    let mut counts = vec![0usize; targets.len()];
    let mut queries = 0usize;
    for q in workload {
        assert_eq!(q.len(), 500);
        for (c, &t) in counts.iter_mut().zip(&targets) {
            if q.binary_search(&Key(t as u64)).is_ok() {
                *c += 1;
            }
        }
        queries += 1;
    }
    assert_eq!(queries, 1000);

    let sims = 4000;
    let expected = exponential_rank_inclusion(&weights, 500, &targets, sims);
    for ((&c, &p), &t) in counts.iter().zip(&expected).zip(&targets) {
        let f = c as f64 / queries as f64;
        let sigma = (p * (1.0 - p) * (1.0 / queries as f64 + 1.0 / sims as f64)).sqrt();
        assert!(
            (f - p).abs() <= 3.0 * sigma + 1e-9,
            "key {t} (weight {:.2}): generator {f:.4}, oracle {p:.4}, sigma {sigma:.4}",
            weights[t]
        );
    }
}

#[test]
fn default_uniform_queries_have_exact_size() {
    let spec = WorkloadSpec {
        distribution: Distribution::Uniform,
        support: 1_000_000,
        query_size: 5000,
        num_queries: 20,
        seed: 3,
    };
    for q in gen_workload(spec).unwrap() {
        assert_eq!(q.len(), 5000);
        assert!(q.windows(2).all(|w| w[0] < w[1]));
    }
}

fn std_attack(
    seed: u64,
    k: usize,
    size: usize,
    rounds: usize,
    removal_fraction: f64,
) -> (f64, Vec<Key>, SketchRandomness) {
    let rand = SketchRandomness::new(seed, size as u64).unwrap();
    let ground: Vec<Key> = (0..size as u64).map(Key).collect();
    let cfg = AttackConfig {
        k,
        rounds,
        removal_fraction,
        seed,
    };
    let (report, _) = attack_standard_estimator(&ground, &cfg, |q| {
        Ok(std_estimate(&sketch_set(&rand, q.iter().copied(), k)?))
    })
    .unwrap();
    (report.final_estimate, report.removed_keys, rand)
}

#[test]
fn attack_estimate_falls_with_more_rounds() {
    let (k, size) = (32usize, 4096usize);
    let fraction = 4.0 * k as f64 / size as f64;
    let mut means = Vec::new();
    for rounds in [0usize, 25, 100, 300] {
        let total: f64 = (0..50u64)
            .map(|s| std_attack(s, k, size, rounds, fraction).0)
            .sum();
        means.push(total / 50.0);
    }
    assert!(means.windows(2).all(|w| w[1] <= w[0]), "means {means:?}");
}

#[test]
fn attack_removes_the_minimum_priority_key() {
    let (k, size) = (64usize, 1usize << 14);
    let cfg = AttackConfig::calibrated(k, size, 0);
    let mut found = 0;
    for seed in 0..50u64 {
        let (_, removed, rand) = std_attack(seed, k, size, cfg.rounds, cfg.removal_fraction);
        let priorities = rand.priorities();
        let min = (0..size)
            .min_by(|&a, &b| priorities[a].total_cmp(&priorities[b]))
            .unwrap();
        if removed.binary_search(&Key(min as u64)).is_ok() {
            found += 1;
        }
    }
    assert!(
        found >= 45,
        "minimum-priority key removed in {found}/50 seeds, need 45"
    );
}
