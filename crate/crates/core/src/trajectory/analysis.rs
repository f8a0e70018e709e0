use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use super::stats::{
    acquisition_index, average_ranks, ls_slope, one_way_anova, permutation_test, smooth, Anova, PermutationResult,
};
use super::{EvalMatrix, TrajectoryError};
use crate::probes::Stratum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub window: usize,
    /// Fraction of the final smoothed accuracy that marks acquisition.
    pub acquisition_fraction: f64,
    /// Final accuracy at or below this is treated as not acquired.
    pub chance: f64,
    pub k_checkpoints: usize,
    pub n_perm: usize,
    pub perm_seed: u64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings { window: 6, acquisition_fraction: 0.9, chance: 0.5, k_checkpoints: 3, n_perm: 1000, perm_seed: 0 }
    }
}

impl AnalysisSettings {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let frac = |x: f64| x > 0.0 && x < 1.0;
        if self.window == 0 || !frac(self.acquisition_fraction) || !frac(self.chance) || self.n_perm == 0 {
            return Err(TrajectoryError::BadParameter(
                "window and n_perm must be positive; thresholds must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Stated in every analysis output.
pub const METHOD_NOTES: [&str; 4] = [
    "rank agreement: Spearman correlation with average ranks for ties, averaged over seed pairs, on probes above chance in every seed",
    "permutation p-value: (1 + #permuted >= observed) / (n_perm + 1), each round shuffling every seed's ranking but the first",
    "terciles: above-chance probes sorted by mean acquisition step, equal thirds, extras to the earliest groups",
    "learning rate: least-squares slope of smoothed accuracy per step up to the acquisition checkpoint",
];

/// `acquisition_time` with the default 90%-of-final rule and chance 0.5.
pub fn acquisition_time(curve: &[f64], steps: &[u64], window: usize) -> Result<Option<u64>, TrajectoryError> {
    if curve.len() != steps.len() {
        return Err(TrajectoryError::BadParameter("curve and steps differ in length".into()));
    }
    let s = smooth(curve, window)?;
    Ok(acquisition_index(&s, 0.9, 0.5).map(|i| steps[i]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcquisitionProfile {
    pub seed: u64,
    pub probe: String,
    #[serde(skip)]
    pub smoothed: Vec<f64>,
    pub final_accuracy: f64,
    pub above_chance: bool,
    #[serde(skip)]
    pub acquisition_index: Option<usize>,
    pub acquisition_step: Option<u64>,
    pub rank: Option<f64>,
}

/// Ranks the acquired probes (1 = earliest, ties averaged); others get `None`.
pub fn rank_probes(acquisition: &[Option<u64>]) -> Result<Vec<Option<f64>>, TrajectoryError> {
    let present: Vec<f64> = acquisition.iter().flatten().map(|&s| s as f64).collect();
    if present.len() < 2 {
        return Err(TrajectoryError::NotEnough { what: "rankable probes", need: 2, have: present.len() });
    }
    let mut ranks = average_ranks(&present).into_iter();
    Ok(acquisition.iter().map(|a| a.map(|_| ranks.next().unwrap())).collect())
}

/// Per-seed profiles, indexed `[seed][probe]`. Seeds with fewer than two
/// acquired probes carry no ranks.
pub fn profiles(m: &EvalMatrix, settings: &AnalysisSettings) -> Result<Vec<Vec<AcquisitionProfile>>, TrajectoryError> {
    let mut out = Vec::with_capacity(m.seeds.len());
    for (si, &seed) in m.seeds.iter().enumerate() {
        let mut row = Vec::with_capacity(m.probes.len());
        for (pi, probe) in m.probes.iter().enumerate() {
            let smoothed = smooth(&m.curve(si, pi), settings.window)?;
            let final_accuracy = *smoothed.last().unwrap();
            let idx = acquisition_index(&smoothed, settings.acquisition_fraction, settings.chance);
            row.push(AcquisitionProfile {
                seed,
                probe: probe.clone(),
                smoothed,
                final_accuracy,
                above_chance: final_accuracy > settings.chance,
                acquisition_index: idx,
                acquisition_step: idx.map(|i| m.steps[i]),
                rank: None,
            });
        }
        let acq: Vec<Option<u64>> = row.iter().map(|p| p.acquisition_step).collect();
        if let Ok(ranks) = rank_probes(&acq) {
            for (p, r) in row.iter_mut().zip(ranks) {
                p.rank = r;
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Mean final accuracy per probe across seeds, and the mean acquisition
/// step over the seeds that acquired it (`None` unless the mean final
/// accuracy is above chance).
pub fn mean_acquisition(profiles: &[Vec<AcquisitionProfile>], chance: f64) -> Vec<(f64, Option<f64>)> {
    let n_probes = profiles.first().map_or(0, Vec::len);
    (0..n_probes)
        .map(|p| {
            let finals: Vec<f64> = profiles.iter().map(|s| s[p].final_accuracy).collect();
            let mean_final = finals.iter().sum::<f64>() / finals.len() as f64;
            let steps: Vec<f64> = profiles.iter().filter_map(|s| s[p].acquisition_step).map(|x| x as f64).collect();
            let mean_step = (mean_final > chance && !steps.is_empty()).then(|| steps.iter().sum::<f64>() / steps.len() as f64);
            (mean_final, mean_step)
        })
        .collect()
}

/// Probe indices per group.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ProbeGroups {
    pub early: Vec<usize>,
    pub middle: Vec<usize>,
    pub late: Vec<usize>,
    pub below_chance: Vec<usize>,
}

impl ProbeGroups {
    pub const NAMES: [&'static str; 4] = ["early", "middle", "late", "below-chance"];

    pub fn by_index(&self) -> [&Vec<usize>; 4] {
        [&self.early, &self.middle, &self.late, &self.below_chance]
    }

    pub fn group_of(&self, probe: usize) -> &'static str {
        let idx = self.by_index().iter().position(|g| g.contains(&probe)).unwrap_or(3);
        Self::NAMES[idx]
    }

    pub fn above_chance(&self) -> Vec<usize> {
        self.early.iter().chain(&self.middle).chain(&self.late).copied().collect()
    }
}

/// Splits probes with a mean acquisition step into early/middle/late thirds
/// (sizes differ by at most one, extras to the earlier groups); probes
/// without one form the below-chance group.
pub fn tercile_groups(mean_steps: &[Option<f64>]) -> Result<ProbeGroups, TrajectoryError> {
    let mut ranked: Vec<(usize, f64)> = mean_steps.iter().enumerate().filter_map(|(i, s)| s.map(|s| (i, s))).collect();
    if ranked.len() < 3 {
        return Err(TrajectoryError::NotEnough { what: "above-chance probes", need: 3, have: ranked.len() });
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let n = ranked.len();
    let sizes = [n / 3 + usize::from(n % 3 >= 1), n / 3 + usize::from(n % 3 == 2), n / 3];
    let ids: Vec<usize> = ranked.iter().map(|r| r.0).collect();
    Ok(ProbeGroups {
        early: ids[..sizes[0]].to_vec(),
        middle: ids[sizes[0]..sizes[0] + sizes[1]].to_vec(),
        late: ids[sizes[0] + sizes[1]..].to_vec(),
        below_chance: (0..mean_steps.len()).filter(|i| mean_steps[*i].is_none()).collect(),
    })
}

/// Fraction of (seed, probe) curves per group whose smoothed accuracy at
/// checkpoint `k` exceeds that at checkpoint 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeFractions {
    pub k_checkpoints: usize,
    /// Early, middle, late, below-chance; `None` for an empty group.
    pub per_group: [Option<f64>; 4],
    pub above_chance: Option<f64>,
}

/// Rounding in the moving average must not count as a rise.
const RISE_EPS: f64 = 1e-12;

pub fn early_derivative_fraction(
    profiles: &[Vec<AcquisitionProfile>],
    groups: &ProbeGroups,
    k: usize,
) -> Result<DerivativeFractions, TrajectoryError> {
    let n_steps = profiles.first().and_then(|s| s.first()).map_or(0, |p| p.smoothed.len());
    if n_steps < k + 1 {
        return Err(TrajectoryError::NotEnough { what: "checkpoints", need: k + 1, have: n_steps });
    }
    let fraction = |probes: &[usize]| -> Option<f64> {
        let mut n = 0usize;
        let mut pos = 0usize;
        for seed in profiles {
            for &p in probes {
                n += 1;
                pos += usize::from(seed[p].smoothed[k] - seed[p].smoothed[0] > RISE_EPS);
            }
        }
        (n > 0).then(|| pos as f64 / n as f64)
    };
    let g = groups.by_index();
    Ok(DerivativeFractions {
        k_checkpoints: k,
        per_group: [fraction(g[0]), fraction(g[1]), fraction(g[2]), fraction(g[3])],
        above_chance: fraction(&groups.above_chance()),
    })
}

/// Least-squares slope (accuracy per step) of each smoothed curve from the
/// start through the acquisition checkpoint (at least two points), or over
/// the whole curve when never acquired. Indexed `[seed][probe]`.
pub fn learning_rates(profiles: &[Vec<AcquisitionProfile>], steps: &[u64]) -> Vec<Vec<f64>> {
    let x: Vec<f64> = steps.iter().map(|&s| s as f64).collect();
    profiles
        .iter()
        .map(|seed| {
            seed.iter()
                .map(|p| {
                    let end = match p.acquisition_index {
                        Some(i) => i.max(1).min(x.len() - 1),
                        None => x.len() - 1,
                    };
                    ls_slope(&x[..=end], &p.smoothed[..=end])
                })
                .collect()
        })
        .collect()
}

pub const BIAS_STRATA: [Stratum; 4] = [
    Stratum::CongruentSingular,
    Stratum::CongruentPlural,
    Stratum::IncongruentSingular,
    Stratum::IncongruentPlural,
];

/// Seed-averaged, smoothed accuracy per agreement stratum for one probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasCurves {
    pub probe: String,
    /// Curves in `BIAS_STRATA` order; `None` when the stratum is absent.
    pub curves: Vec<(String, Option<Vec<f64>>)>,
    /// Plural-target accuracy rises then falls while singular-target
    /// accuracy falls then rises; `None` without all four strata.
    pub crossover: Option<bool>,
}

const CROSSOVER_MARGIN: f64 = 0.02;

fn hump(curve: &[f64], sign: f64) -> bool {
    let first = curve[0] * sign;
    let last = curve[curve.len() - 1] * sign;
    let peak = curve.iter().map(|v| v * sign).fold(f64::NEG_INFINITY, f64::max);
    peak > first + CROSSOVER_MARGIN && peak > last + CROSSOVER_MARGIN
}

pub fn bias_curves(m: &EvalMatrix, probe: usize, window: usize) -> Result<BiasCurves, TrajectoryError> {
    let mut curves = Vec::with_capacity(4);
    for stratum in BIAS_STRATA {
        let per_seed: Option<Vec<Vec<f64>>> = (0..m.seeds.len()).map(|s| m.stratum_curve(stratum, s, probe)).collect();
        let curve = match per_seed {
            Some(c) => {
                let mean: Vec<f64> =
                    (0..m.steps.len()).map(|t| c.iter().map(|s| s[t]).sum::<f64>() / c.len() as f64).collect();
                Some(smooth(&mean, window)?)
            }
            None => {
                warn!("probe {}: stratum {stratum} is empty, no bias curve", m.probes[probe]);
                None
            }
        };
        curves.push((stratum.name().to_string(), curve));
    }
    let crossover = match (&curves[0].1, &curves[1].1, &curves[2].1, &curves[3].1) {
        (Some(cs), Some(cp), Some(is), Some(ip)) => {
            let avg = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect::<Vec<f64>>();
            Some(hump(&avg(cp, ip), 1.0) && hump(&avg(cs, is), -1.0))
        }
        _ => None,
    };
    Ok(BiasCurves { probe: m.probes[probe].clone(), curves, crossover })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSummary {
    pub probe: String,
    pub mean_final_accuracy: f64,
    pub mean_acquisition_step: Option<f64>,
    pub n_seeds_acquired: usize,
    pub group: String,
}

/// Everything the report needs, serializable as the analysis JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub method_notes: Vec<String>,
    pub settings: AnalysisSettings,
    pub seeds: Vec<u64>,
    pub steps: Vec<u64>,
    pub probes: Vec<ProbeSummary>,
    pub acquisition: Vec<AcquisitionProfile>,
    pub rank_correlation: Option<PermutationResult>,
    pub groups: ProbeGroups,
    pub early_derivative: Option<DerivativeFractions>,
    pub learning_rates: Vec<Vec<f64>>,
    pub anova: Option<Anova>,
    pub bias: Vec<BiasCurves>,
    /// Analyses that could not run and why.
    pub issues: Vec<String>,
}

pub fn analyze(m: &EvalMatrix, settings: &AnalysisSettings) -> Result<Analysis, TrajectoryError> {
    settings.validate()?;
    let mut issues = Vec::new();
    let profs = profiles(m, settings)?;
    for (seed, row) in m.seeds.iter().zip(&profs) {
        if row.iter().all(|p| p.rank.is_none()) {
            issues.push(format!("seed {seed}: fewer than 2 acquired probes, not ranked"));
        }
    }
    let means = mean_acquisition(&profs, settings.chance);
    let mean_steps: Vec<Option<f64>> = means.iter().map(|m| m.1).collect();

    let ranks: Vec<Vec<Option<f64>>> = profs.iter().map(|s| s.iter().map(|p| p.rank).collect()).collect();
    let rank_correlation = match permutation_test(&ranks, settings.n_perm, settings.perm_seed) {
        Ok(r) => Some(r),
        Err(e) => {
            issues.push(format!("rank correlation: {e}"));
            None
        }
    };

    let groups = match tercile_groups(&mean_steps) {
        Ok(g) => g,
        Err(e) => {
            issues.push(format!("tercile groups: {e}"));
            ProbeGroups { below_chance: (0..m.probes.len()).collect(), ..Default::default() }
        }
    };
    let early_derivative = match early_derivative_fraction(&profs, &groups, settings.k_checkpoints) {
        Ok(d) => Some(d),
        Err(e) => {
            issues.push(format!("early derivative: {e}"));
            None
        }
    };
    let rates = learning_rates(&profs, &m.steps);
    let anova_groups: Vec<Vec<f64>> = [&groups.early, &groups.middle, &groups.late]
        .iter()
        .map(|g| rates.iter().flat_map(|seed| g.iter().map(|&p| seed[p])).collect())
        .collect();
    let anova = match one_way_anova(&anova_groups) {
        Ok(a) => Some(a),
        Err(e) => {
            issues.push(format!("anova: {e}"));
            None
        }
    };
    let mut bias = Vec::new();
    for p in 0..m.probes.len() {
        let b = bias_curves(m, p, settings.window)?;
        if b.curves.iter().any(|c| c.1.is_some()) {
            bias.push(b);
        }
    }
    let probes = m
        .probes
        .iter()
        .enumerate()
        .map(|(i, name)| ProbeSummary {
            probe: name.clone(),
            mean_final_accuracy: means[i].0,
            mean_acquisition_step: means[i].1,
            n_seeds_acquired: profs.iter().filter(|s| s[i].acquisition_step.is_some()).count(),
            group: groups.group_of(i).to_string(),
        })
        .collect();
    Ok(Analysis {
        method_notes: METHOD_NOTES.iter().map(|s| s.to_string()).collect(),
        settings: settings.clone(),
        seeds: m.seeds.clone(),
        steps: m.steps.clone(),
        probes,
        acquisition: profs.into_iter().flatten().collect(),
        rank_correlation,
        groups,
        early_derivative,
        learning_rates: rates,
        anova,
        bias,
        issues,
    })
}

impl Analysis {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("analysis serializes") + "\n"
    }

    /// CSV mirrors of the per-seed tables: `(file name, contents)`.
    pub fn csv_tables(&self) -> Vec<(&'static str, String)> {
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        let mut acq = String::from("seed,probe,final_accuracy,above_chance,acquisition_step,rank\n");
        for p in &self.acquisition {
            let _ = writeln!(
                acq,
                "{},{},{},{},{},{}",
                p.seed,
                p.probe,
                p.final_accuracy,
                p.above_chance,
                p.acquisition_step.map_or(String::new(), |s| s.to_string()),
                opt(p.rank)
            );
        }
        let mut summary = String::from("probe,mean_final_accuracy,mean_acquisition_step,n_seeds_acquired,group\n");
        for p in &self.probes {
            let _ = writeln!(
                summary,
                "{},{},{},{},{}",
                p.probe,
                p.mean_final_accuracy,
                opt(p.mean_acquisition_step),
                p.n_seeds_acquired,
                p.group
            );
        }
        let mut rates = String::from("seed,probe,learning_rate\n");
        for (seed, row) in self.seeds.iter().zip(&self.learning_rates) {
            for (p, r) in self.probes.iter().zip(row) {
                let _ = writeln!(rates, "{seed},{},{r}", p.probe);
            }
        }
        let mut bias = String::from("probe,stratum,step,accuracy\n");
        for b in &self.bias {
            for (stratum, curve) in &b.curves {
                if let Some(c) = curve {
                    for (step, a) in self.steps.iter().zip(c) {
                        let _ = writeln!(bias, "{},{stratum},{step},{a}", b.probe);
                    }
                }
            }
        }
        vec![
            ("acquisition.csv", acq),
            ("probe_summary.csv", summary),
            ("learning_rates.csv", rates),
            ("bias_curves.csv", bias),
        ]
    }
}
