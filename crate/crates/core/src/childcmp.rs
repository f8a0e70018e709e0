//! Comparison of model acquisition order with the three syntactic stages
//! observed in children.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{acquisition_index, smooth, EvalMatrix, TrajectoryError};

#[derive(Debug, Error)]
pub enum ChildCmpError {
    #[error("stage map: {0}")]
    InvalidMap(String),
    #[error("stage map probe `{0}` was not evaluated")]
    UnknownProbe(String),
    #[error("step {0} is not an evaluated checkpoint")]
    UnknownStep(u64),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("stage map file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One child stage with the label used in the child studies and the probe
/// standing in for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageEntry {
    pub stage: usize,
    pub child_label: String,
    pub probe_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageMap {
    pub learned_threshold: f64,
    pub stages: Vec<StageEntry>,
}

/// Child phenomena grouped into the three stages, with the approximate age
/// (months) at which children produce them.
pub const CHILD_STAGES: [(usize, &str, u32, &[&str]); 3] = [
    (
        1,
        "Simple sentences in Subject-Verb (SV) order",
        12,
        &["Subject-Verb Simple", "Subject-Verb Unaccusative", "Verb-Subject Unaccusative"],
    ),
    (2, "Wh-questions", 30, &["Root WH-Argument", "WH-Adjunct Excluding Why", "Preposed Adverb", "Root y/n"]),
    (3, "Relative Clauses (RCs)", 42, &["Why", "Relative Clause", "Topicalisation", "Embedding"]),
];

impl Default for StageMap {
    fn default() -> Self {
        let probes = ["simple-SV", "wh-question", "short-nested-outer"];
        StageMap {
            learned_threshold: 0.55,
            stages: CHILD_STAGES
                .iter()
                .zip(probes)
                .map(|(&(stage, label, _, _), probe)| StageEntry {
                    stage,
                    child_label: label.to_string(),
                    probe_id: probe.to_string(),
                })
                .collect(),
        }
    }
}

impl StageMap {
    pub fn validate(&self) -> Result<(), ChildCmpError> {
        if self.stages.is_empty() {
            return Err(ChildCmpError::InvalidMap("no stages".into()));
        }
        if !(self.learned_threshold > 0.0 && self.learned_threshold < 1.0) {
            return Err(ChildCmpError::InvalidMap(format!("threshold {} outside (0, 1)", self.learned_threshold)));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.stage != i + 1 {
                return Err(ChildCmpError::InvalidMap(format!("stage {} listed at position {}", s.stage, i + 1)));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ChildCmpError> {
        let map: StageMap = toml::from_str(text)?;
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, ChildCmpError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("stage map serializes")
    }

    fn probe_indices(&self, m: &EvalMatrix) -> Result<Vec<usize>, ChildCmpError> {
        self.stages
            .iter()
            .map(|s| m.probe_index(&s.probe_id).map_err(|_| ChildCmpError::UnknownProbe(s.probe_id.clone())))
            .collect()
    }
}

/// Which time marks a probe as acquired for the order check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderRule {
    /// First checkpoint whose raw accuracy exceeds the learned threshold.
    #[default]
    FirstCrossing,
    /// Smoothed accuracy reaching 90% of its final value.
    NinetyPercentOfFinal,
}

/// First step whose accuracy is strictly above `threshold`.
pub fn first_crossing(curve: &[f64], steps: &[u64], threshold: f64) -> Option<u64> {
    curve.iter().position(|&a| a > threshold).map(|i| steps[i])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedOrder {
    pub seed: u64,
    /// Acquisition step per stage, in stage order.
    pub steps: Vec<Option<u64>>,
    pub order_matches: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageComparison {
    pub rule: OrderRule,
    pub learned_threshold: f64,
    pub probes: Vec<String>,
    pub seeds: Vec<SeedOrder>,
    pub n_seeds: usize,
    pub n_matching_seeds: usize,
    pub k_stages: usize,
    pub chance_probability: f64,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Probability that `n` seeds all follow one given order of `k` stages by
/// chance: `(1/k!)^n`.
pub fn chance_probability(k: usize, n: usize) -> f64 {
    (1.0 / factorial(k)).powi(n as i32)
}

/// A seed matches when its mapped probes are acquired at strictly
/// increasing steps in stage order.
pub fn compare_orders(
    m: &EvalMatrix,
    map: &StageMap,
    rule: OrderRule,
    window: usize,
) -> Result<StageComparison, ChildCmpError> {
    map.validate()?;
    let probes = map.probe_indices(m)?;
    let mut seeds = Vec::with_capacity(m.seeds.len());
    for (si, &seed) in m.seeds.iter().enumerate() {
        let mut steps = Vec::with_capacity(probes.len());
        for &p in &probes {
            let curve = m.curve(si, p);
            let step = match rule {
                OrderRule::FirstCrossing => first_crossing(&curve, &m.steps, map.learned_threshold),
                OrderRule::NinetyPercentOfFinal => acquisition_index(&smooth(&curve, window)?, 0.9, 0.5).map(|i| m.steps[i]),
            };
            steps.push(step);
        }
        let missing: Vec<&str> = steps
            .iter()
            .zip(&map.stages)
            .filter(|(s, _)| s.is_none())
            .map(|(_, e)| e.probe_id.as_str())
            .collect();
        let (order_matches, reason) = if !missing.is_empty() {
            (false, Some(format!("never acquired: {}", missing.join(", "))))
        } else if steps.windows(2).all(|w| w[0] < w[1]) {
            (true, None)
        } else {
            (false, Some("stages acquired out of order or at the same step".to_string()))
        };
        seeds.push(SeedOrder { seed, steps, order_matches, reason });
    }
    let n_matching = seeds.iter().filter(|s| s.order_matches).count();
    let k = map.stages.len();
    Ok(StageComparison {
        rule,
        learned_threshold: map.learned_threshold,
        probes: map.stages.iter().map(|s| s.probe_id.clone()).collect(),
        n_seeds: seeds.len(),
        seeds,
        n_matching_seeds: n_matching,
        k_stages: k,
        chance_probability: chance_probability(k, n_matching),
    })
}

impl StageComparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes") + "\n"
    }
}

/// Agents (children at stage ages, then the model at chosen steps) by
/// stage; a cell is true when the phenomenon is learned.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnedGrid {
    pub stages: Vec<String>,
    pub agents: Vec<String>,
    pub cells: Vec<Vec<bool>>,
}

impl LearnedGrid {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent");
        for s in &self.stages {
            let _ = write!(out, ",{s}");
        }
        out.push('\n');
        for (agent, row) in self.agents.iter().zip(&self.cells) {
            out.push_str(agent);
            for &c in row {
                out.push_str(if c { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }
}

/// Children rows: at the age of stage `j`, stages `1..=j` are produced.
pub fn children_rows(k: usize) -> Vec<(String, Vec<bool>)> {
    CHILD_STAGES
        .iter()
        .take(k)
        .enumerate()
        .map(|(j, &(_, _, months, _))| (format!("children {months} months"), (0..k).map(|s| s <= j).collect()))
        .collect()
}

/// The model is an agent at each of `at_steps`; a stage counts as learned
/// when the seed-averaged accuracy of its probe is strictly above the
/// threshold.
pub fn learned_matrix(m: &EvalMatrix, map: &StageMap, at_steps: &[u64]) -> Result<LearnedGrid, ChildCmpError> {
    map.validate()?;
    let probes = map.probe_indices(m)?;
    let k = map.stages.len();
    let mut agents = Vec::new();
    let mut cells = Vec::new();
    for (name, row) in children_rows(k) {
        agents.push(name);
        cells.push(row);
    }
    for &step in at_steps {
        let t = m.step_index(step).map_err(|_| ChildCmpError::UnknownStep(step))?;
        let row = probes
            .iter()
            .map(|&p| {
                let mean = (0..m.seeds.len()).map(|s| m.get(s, t, p)).sum::<f64>() / m.seeds.len() as f64;
                mean > map.learned_threshold
            })
            .collect();
        agents.push(format!("model step {step}"));
        cells.push(row);
    }
    Ok(LearnedGrid { stages: map.stages.iter().map(|s| s.child_label.clone()).collect(), agents, cells })
}
