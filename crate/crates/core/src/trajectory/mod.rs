//! Learning-trajectory statistics over a (seed × step × probe) accuracy
//! matrix.

mod analysis;
mod stats;

pub use analysis::{
    acquisition_time, analyze, bias_curves, early_derivative_fraction, learning_rates, mean_acquisition, profiles,
    rank_probes, tercile_groups, AcquisitionProfile, Analysis, AnalysisSettings, BiasCurves, DerivativeFractions,
    ProbeGroups, ProbeSummary, BIAS_STRATA, METHOD_NOTES,
};
pub use stats::{
    acquisition_index, average_ranks, common_subset, ls_slope, mean_pairwise_rank_correlation, mean_sem, one_way_anova,
    pearson, permutation_test, smooth, spearman, Anova, PermutationResult,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::probes::{EvalRow, Stratum};

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("curve is empty")]
    EmptyCurve,
    #[error("{what}: need at least {need}, have {have}")]
    NotEnough { what: &'static str, need: usize, have: usize },
    #[error("{0}")]
    BadParameter(String),
    #[error("evaluation has no row for seed {seed}, step {step}, probe {probe}")]
    MissingCell { seed: u64, step: u64, probe: String },
    #[error("evaluation repeats seed {seed}, step {step}, probe {probe}, stratum {stratum}")]
    DuplicateCell { seed: u64, step: u64, probe: String, stratum: Stratum },
    #[error("accuracy {0} outside [0, 1]")]
    BadAccuracy(f64),
    #[error("unknown probe `{0}`")]
    UnknownProbe(String),
    #[error("unknown step {0}")]
    UnknownStep(u64),
}

/// Accuracy of every probe at every checkpoint of every seed, plus the
/// optional stratified breakdowns.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMatrix {
    pub seeds: Vec<u64>,
    pub steps: Vec<u64>,
    pub probes: Vec<String>,
    accuracy: Vec<f64>,
    strata: BTreeMap<Stratum, Vec<Option<f64>>>,
}

impl EvalMatrix {
    /// `accuracy` is laid out seed-major, then step, then probe.
    pub fn new(seeds: Vec<u64>, steps: Vec<u64>, probes: Vec<String>, accuracy: Vec<f64>) -> Result<Self, TrajectoryError> {
        if seeds.is_empty() || steps.is_empty() || probes.is_empty() {
            return Err(TrajectoryError::NotEnough { what: "seeds, steps and probes", need: 1, have: 0 });
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TrajectoryError::BadParameter("steps must be strictly increasing".into()));
        }
        if accuracy.len() != seeds.len() * steps.len() * probes.len() {
            return Err(TrajectoryError::BadParameter(format!(
                "{} accuracies for {}×{}×{} cells",
                accuracy.len(),
                seeds.len(),
                steps.len(),
                probes.len()
            )));
        }
        if let Some(&a) = accuracy.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(TrajectoryError::BadAccuracy(a));
        }
        Ok(EvalMatrix { seeds, steps, probes, accuracy, strata: BTreeMap::new() })
    }

    /// Builds a matrix from evaluation rows. Seeds and steps are sorted;
    /// probes keep their first-appearance order.
    pub fn from_rows(rows: &[EvalRow]) -> Result<Self, TrajectoryError> {
        let seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect::<BTreeSet<_>>().into_iter().collect();
        let steps: Vec<u64> = rows.iter().map(|r| r.step).collect::<BTreeSet<_>>().into_iter().collect();
        let mut probes: Vec<String> = Vec::new();
        for r in rows {
            if !probes.contains(&r.probe_id) {
                probes.push(r.probe_id.clone());
            }
        }
        let seed_ix: HashMap<u64, usize> = seeds.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let step_ix: HashMap<u64, usize> = steps.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let probe_ix: HashMap<&str, usize> = probes.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        let cells = seeds.len() * steps.len() * probes.len();
        let mut tables: BTreeMap<Stratum, Vec<Option<f64>>> = BTreeMap::new();
        for r in rows {
            if !(0.0..=1.0).contains(&r.accuracy) {
                return Err(TrajectoryError::BadAccuracy(r.accuracy));
            }
            let cell = (seed_ix[&r.seed] * steps.len() + step_ix[&r.step]) * probes.len() + probe_ix[r.probe_id.as_str()];
            let table = tables.entry(r.stratum).or_insert_with(|| vec![None; cells]);
            if table[cell].replace(r.accuracy).is_some() {
                return Err(TrajectoryError::DuplicateCell {
                    seed: r.seed,
                    step: r.step,
                    probe: r.probe_id.clone(),
                    stratum: r.stratum,
                });
            }
        }
        let all = tables.remove(&Stratum::All).unwrap_or_else(|| vec![None; cells]);
        let mut accuracy = Vec::with_capacity(cells);
        for (cell, a) in all.into_iter().enumerate() {
            match a {
                Some(a) => accuracy.push(a),
                None => {
                    let p = cell % probes.len();
                    let t = (cell / probes.len()) % steps.len();
                    let s = cell / (probes.len() * steps.len());
                    return Err(TrajectoryError::MissingCell { seed: seeds[s], step: steps[t], probe: probes[p].clone() });
                }
            }
        }
        let mut m = EvalMatrix::new(seeds, steps, probes, accuracy)?;
        m.strata = tables;
        Ok(m)
    }

    fn cell(&self, seed: usize, step: usize, probe: usize) -> usize {
        (seed * self.steps.len() + step) * self.probes.len() + probe
    }

    pub fn get(&self, seed: usize, step: usize, probe: usize) -> f64 {
        self.accuracy[self.cell(seed, step, probe)]
    }

    /// Accuracy over steps for one (seed, probe).
    pub fn curve(&self, seed: usize, probe: usize) -> Vec<f64> {
        (0..self.steps.len()).map(|t| self.get(seed, t, probe)).collect()
    }

    /// Stratum curve, or `None` if any checkpoint lacks the stratum.
    pub fn stratum_curve(&self, stratum: Stratum, seed: usize, probe: usize) -> Option<Vec<f64>> {
        if stratum == Stratum::All {
            return Some(self.curve(seed, probe));
        }
        let table = self.strata.get(&stratum)?;
        (0..self.steps.len()).map(|t| table[self.cell(seed, t, probe)]).collect()
    }

    /// Sets one stratum for every cell; `values` uses the main layout.
    pub fn set_stratum(&mut self, stratum: Stratum, values: Vec<Option<f64>>) -> Result<(), TrajectoryError> {
        if values.len() != self.accuracy.len() {
            return Err(TrajectoryError::BadParameter("stratum table has the wrong size".into()));
        }
        self.strata.insert(stratum, values);
        Ok(())
    }

    pub fn probe_index(&self, probe: &str) -> Result<usize, TrajectoryError> {
        self.probes.iter().position(|p| p == probe).ok_or_else(|| TrajectoryError::UnknownProbe(probe.to_string()))
    }

    pub fn step_index(&self, step: u64) -> Result<usize, TrajectoryError> {
        self.steps.binary_search(&step).map_err(|_| TrajectoryError::UnknownStep(step))
    }
}
