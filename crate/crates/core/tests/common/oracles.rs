//! Reference implementations written without looking at the library code.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}


/// Mean of the points whose offset from `i` lies in [-w/2, w-1-w/2].
pub fn brute_smooth(c: &[f64], w: usize) -> Vec<f64> {
    let (l, r) = ((w / 2) as i64, (w - 1 - w / 2) as i64);
    (0..c.len() as i64)
        .map(|i| {
            let pts: Vec<f64> = (0..c.len() as i64).filter(|&j| j >= i - l && j <= i + r).map(|j| c[j as usize]).collect();
            pts.iter().sum::<f64>() / pts.len() as f64
        })
        .collect()
}

/// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
pub fn counting_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&u| u < v).count() as f64;
            let eq = x.iter().filter(|&&u| u == v).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

pub fn brute_spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (counting_ranks(a), counting_ranks(b));
    let n = a.len() as f64;
    let distinct = |x: &[f64]| {
        let mut s = x.to_vec();
        s.sort_by(f64::total_cmp);
        s.windows(2).all(|w| w[0] != w[1])
    };
    if distinct(a) && distinct(b) {
        // Textbook closed form, valid without ties.
        let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
        return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
    }
    let cov = |p: &[f64], q: &[f64]| {
        let (mp, mq) = (p.iter().sum::<f64>() / n, q.iter().sum::<f64>() / n);
        p.iter().zip(q).map(|(x, y)| (x - mp) * (y - mq)).sum::<f64>()
    };
    let (vaa, vbb) = (cov(&ra, &ra), cov(&rb, &rb));
    if vaa == 0.0 || vbb == 0.0 {
        0.0
    } else {
        cov(&ra, &rb) / (vaa * vbb).sqrt()
    }
}

pub fn brute_mean_pairwise(v: &[Vec<f64>]) -> f64 {
    let mut vals = Vec::new();
    for i in 0..v.len() {
        for j in 0..v.len() {
            if i < j {
                vals.push(brute_spearman(&v[i], &v[j]));
            }
        }
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Same shuffling protocol written out independently: round `r` uses stream
/// `r` and shuffles seeds 1.. in order, seed 0 stays put.
pub fn brute_permutation_p(v: &[Vec<f64>], n_perm: usize, seed: u64) -> f64 {
    let observed = brute_mean_pairwise(v);
    let mut reached = 0;
    for r in 0..n_perm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let mut w = vec![v[0].clone()];
        for s in &v[1..] {
            let mut s = s.clone();
            s.shuffle(&mut rng);
            w.push(s);
        }
        if brute_mean_pairwise(&w) >= observed - 1e-12 {
            reached += 1;
        }
    }
    (1.0 + reached as f64) / (n_perm as f64 + 1.0)
}

/// F via the total-sum-of-squares decomposition.
pub fn brute_anova_f(groups: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let grand = all.iter().sum::<f64>() / n;
    let sst: f64 = all.iter().map(|x| (x - grand).powi(2)).sum();
    let ssw: f64 = groups
        .iter()
        .map(|g| {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    let k = groups.len() as f64;
    ((sst - ssw) / (k - 1.0)) / (ssw / (n - k))
}

/// Kolmogorov limiting distribution with the Stephens small-sample
/// correction: P(D_n > d).
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
