//! Plain numeric routines used by the trajectory analysis.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::function::beta::beta_reg;

use super::TrajectoryError;

/// Centered moving average. The window spans `window / 2` points to the
/// left and `window - 1 - window / 2` to the right, truncated at the ends.
pub fn smooth(curve: &[f64], window: usize) -> Result<Vec<f64>, TrajectoryError> {
    if curve.is_empty() {
        return Err(TrajectoryError::EmptyCurve);
    }
    if window == 0 {
        return Err(TrajectoryError::BadParameter("smoothing window must be at least 1".into()));
    }
    let left = window / 2;
    let right = window - 1 - left;
    let n = curve.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right).min(n - 1);
            curve[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect())
}

/// Index of the first smoothed value at or above `fraction` of the last
/// one; `None` when the last value is at or below `chance`.
pub fn acquisition_index(smoothed: &[f64], fraction: f64, chance: f64) -> Option<usize> {
    let last = *smoothed.last()?;
    if last <= chance {
        return None;
    }
    let threshold = fraction * last;
    smoothed.iter().position(|&v| v >= threshold)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman correlation: Pearson correlation of average ranks. A constant
/// input has no defined correlation and yields 0.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Restricts per-seed vectors to the entries present in every seed.
pub fn common_subset(vectors: &[Vec<Option<f64>>]) -> (Vec<usize>, Vec<Vec<f64>>) {
    let n = vectors.first().map_or(0, Vec::len);
    let keep: Vec<usize> = (0..n).filter(|&i| vectors.iter().all(|v| v.get(i).copied().flatten().is_some())).collect();
    let restricted = vectors.iter().map(|v| keep.iter().map(|&i| v[i].unwrap()).collect()).collect();
    (keep, restricted)
}

fn check_rankings(vectors: &[Vec<f64>]) -> Result<(), TrajectoryError> {
    if vectors.len() < 2 {
        return Err(TrajectoryError::NotEnough { what: "seeds", need: 2, have: vectors.len() });
    }
    let k = vectors[0].len();
    if k < 3 {
        return Err(TrajectoryError::NotEnough { what: "probes ranked in every seed", need: 3, have: k });
    }
    Ok(())
}

fn mean_pairwise(vectors: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            total += spearman(&vectors[i], &vectors[j]);
            n += 1;
        }
    }
    total / n as f64
}

/// Mean Spearman correlation over all unordered seed pairs, computed on the
/// probes ranked in every seed. Entries are ranks or acquisition steps.
pub fn mean_pairwise_rank_correlation(vectors: &[Vec<Option<f64>>]) -> Result<f64, TrajectoryError> {
    let (_, common) = common_subset(vectors);
    check_rankings(&common)?;
    Ok(mean_pairwise(&common))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationResult {
    pub observed: f64,
    pub p_value: f64,
    pub n_perm: usize,
    pub n_probes: usize,
}

/// Slack for counting a permuted statistic as reaching the observed one.
const TIE_SLACK: f64 = 1e-12;

/// Permutation test for the mean pairwise rank correlation. In round `r`
/// (random stream `r` of `seed`) every seed after the first has its ranking
/// shuffled once, in seed order, and all pairs are recomputed from the
/// shuffled rankings.
pub fn permutation_test(vectors: &[Vec<Option<f64>>], n_perm: usize, seed: u64) -> Result<PermutationResult, TrajectoryError> {
    if n_perm < 1 {
        return Err(TrajectoryError::BadParameter("n_perm must be at least 1".into()));
    }
    let (_, common) = common_subset(vectors);
    check_rankings(&common)?;
    let observed = mean_pairwise(&common);
    let mut reached = 0usize;
    let mut shuffled = common.clone();
    for round in 0..n_perm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(round as u64);
        for (dst, src) in shuffled.iter_mut().zip(&common).skip(1) {
            dst.copy_from_slice(src);
            dst.shuffle(&mut rng);
        }
        if mean_pairwise(&shuffled) >= observed - TIE_SLACK {
            reached += 1;
        }
    }
    Ok(PermutationResult {
        observed,
        p_value: (1 + reached) as f64 / (n_perm + 1) as f64,
        n_perm,
        n_probes: common[0].len(),
    })
}

/// Least-squares slope of `y` against `x`; 0 when `x` is constant.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Anova {
    pub f: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub ss_between: f64,
    pub ss_within: f64,
    /// Within-group variance is zero, so F is reported as infinite.
    pub degenerate: bool,
}

/// Classical one-way ANOVA. The p-value is the F upper tail
/// `I_{d2/(d2+d1 F)}(d2/2, d1/2)`.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<Anova, TrajectoryError> {
    if groups.len() < 2 {
        return Err(TrajectoryError::NotEnough { what: "groups", need: 2, have: groups.len() });
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(TrajectoryError::NotEnough { what: "observations per group", need: 2, have: g.len() });
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    }
    let d1 = groups.len() - 1;
    let d2 = n - groups.len();
    if ssw == 0.0 {
        return Ok(Anova {
            f: f64::INFINITY,
            p_value: 0.0,
            df_between: d1,
            df_within: d2,
            ss_between: ssb,
            ss_within: ssw,
            degenerate: true,
        });
    }
    let f = (ssb / d1 as f64) / (ssw / d2 as f64);
    let (a, b) = (d2 as f64 / 2.0, d1 as f64 / 2.0);
    let x = d2 as f64 / (d2 as f64 + d1 as f64 * f);
    let p = beta_reg(a, b, x.clamp(0.0, 1.0));
    Ok(Anova { f, p_value: p, df_between: d1, df_within: d2, ss_between: ssb, ss_within: ssw, degenerate: false })
}

/// Mean and standard error (sample std / sqrt(n), 0 for a single value)
/// at each position of equally long curves.
pub fn mean_sem(curves: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let Some(first) = curves.first() else {
        return (Vec::new(), Vec::new());
    };
    let n = curves.len() as f64;
    let mut mean = vec![0.0; first.len()];
    let mut sem = vec![0.0; first.len()];
    for t in 0..first.len() {
        let m = curves.iter().map(|c| c[t]).sum::<f64>() / n;
        mean[t] = m;
        if curves.len() > 1 {
            let var = curves.iter().map(|c| (c[t] - m) * (c[t] - m)).sum::<f64>() / (n - 1.0);
            sem[t] = (var / n).sqrt();
        }
    }
    (mean, sem)
}
