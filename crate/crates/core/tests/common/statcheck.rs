//! Library statistics against the reference implementations on random
//! small instances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajlab::trajectory::{mean_pairwise_rank_correlation, one_way_anova, permutation_test, smooth};

use super::oracles::*;

fn rankings(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n_seeds = rng.random_range(2..5);
    let n_probes = rng.random_range(3..7);
    (0..n_seeds).map(|_| (0..n_probes).map(|_| f64::from(rng.random_range(0..5u32))).collect()).collect()
}

fn some(v: &[Vec<f64>]) -> Vec<Vec<Option<f64>>> {
    v.iter().map(|s| s.iter().map(|&x| Some(x)).collect()).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Largest absolute difference between library and reference smoothing.
pub fn smooth_error(cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let c: Vec<f64> = (0..rng.random_range(1..40)).map(|_| rng.random::<f64>()).collect();
        let w = rng.random_range(1..12);
        for (a, b) in smooth(&c, w).unwrap().iter().zip(brute_smooth(&c, w)) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Largest relative difference of the mean pairwise Spearman correlation,
/// ties included. Cases where both sides are within 1e-12 of zero count as
/// equal.
pub fn spearman_error(cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let v = rankings(&mut rng);
        let (a, b) = (mean_pairwise_rank_correlation(&some(&v)).unwrap(), brute_mean_pairwise(&v));
        if (a - b).abs() > 1e-12 {
            worst = worst.max(rel(a, b));
        }
    }
    worst
}

/// Cases where the library p-value differs from the reference protocol,
/// or a repeat with the same seed differs.
pub fn permutation_mismatches(cases: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut bad = 0;
    for case in 0..cases as u64 {
        let v = rankings(&mut rng);
        let a = permutation_test(&some(&v), 60, case).unwrap();
        if a.p_value != brute_permutation_p(&v, 60, case) || a != permutation_test(&some(&v), 60, case).unwrap() {
            bad += 1;
        }
    }
    bad
}

/// Largest relative difference of the ANOVA F statistic.
pub fn anova_error(cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < cases {
        let groups: Vec<Vec<f64>> = (0..rng.random_range(2..5))
            .map(|_| (0..rng.random_range(2..8)).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let a = one_way_anova(&groups).unwrap();
        if a.degenerate {
            continue;
        }
        worst = worst.max(rel(a.f, brute_anova_f(&groups)));
        done += 1;
    }
    worst
}

/// KS distance of null p-values from the uniform law and its p-value.
/// Each replicate ranks 8 probes independently at random for 4 seeds.
pub fn null_calibration(replicates: usize, n_perm: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ps: Vec<f64> = (0..replicates as u64)
        .map(|rep| {
            let v: Vec<Vec<Option<f64>>> = (0..4)
                .map(|_| {
                    let mut r: Vec<f64> = (1..=8).map(f64::from).collect();
                    r.shuffle(&mut rng);
                    r.into_iter().map(Some).collect()
                })
                .collect();
            permutation_test(&v, n_perm, rep).unwrap().p_value
        })
        .collect();
    ps.sort_by(f64::total_cmp);
    let n = ps.len() as f64;
    let d = ps
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - i as f64 / n).abs().max(((i + 1) as f64 / n - p).abs()))
        .fold(0.0, f64::max);
    (d, ks_p_value(d, ps.len()))
}
