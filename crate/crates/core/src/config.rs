//! Run configuration: one TOML file describing data, model, training,
//! probes and analysis.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::childcmp::OrderRule;
use crate::model::{AdamSettings, ModelConfig};
use crate::probes::{Congruency, Holdout, Phenomenon, DEFAULT_EVAL_BATCH};
use crate::tokenizer::DEFAULT_PUNCTUATION;
use crate::trajectory::AnalysisSettings;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("config refers to missing file {0}")]
    MissingFile(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Grammar file; the built-in grammar when absent.
    pub grammar: Option<PathBuf>,
    /// Raw training text, one document per line. Replaces the generated
    /// corpus; the grammar is then used only for probe generation.
    pub corpus: Option<PathBuf>,
    pub n_sentences: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { grammar: None, corpus: None, n_sentences: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub vocab_size: usize,
    pub punctuation: String,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        TokenizerSection { vocab_size: 256, punctuation: DEFAULT_PUNCTUATION.to_string() }
    }
}

/// Model shape; the vocabulary size comes from the tokenizer and the seed
/// from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub context_len: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { n_layers: 2, n_heads: 4, d_model: 64, d_ff: 256, context_len: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_steps: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let a = AdamSettings::default();
        TrainSection {
            lr: 4e-4,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            batch_size: 16,
            max_steps: 3000,
            checkpoint_every: 100,
        }
    }
}

impl TrainSection {
    pub fn adam(&self) -> AdamSettings {
        AdamSettings { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub phenomenon: Phenomenon,
    #[serde(default, skip_serializing_if = "is_any")]
    pub congruency: Congruency,
    /// Defaults to the phenomenon label plus the congruency suffix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_pairs: Option<usize>,
}

fn is_any(c: &Congruency) -> bool {
    *c == Congruency::Any
}

impl GenerateSpec {
    pub fn new(phenomenon: Phenomenon, congruency: Congruency) -> Self {
        GenerateSpec { phenomenon, congruency, probe_id: None, n_pairs: None }
    }

    pub fn probe_id(&self) -> String {
        self.probe_id.clone().unwrap_or_else(|| format!("{}{}", self.phenomenon.label(), self.congruency.suffix()))
    }
}

/// Every phenomenon, plus congruent and incongruent variants of the
/// two-noun ones.
pub fn default_generate() -> Vec<GenerateSpec> {
    let mut specs: Vec<GenerateSpec> = Phenomenon::ALL.iter().map(|&p| GenerateSpec::new(p, Congruency::Any)).collect();
    for p in [Phenomenon::NounPp, Phenomenon::ShortNestedInner, Phenomenon::ShortNestedOuter] {
        for c in [Congruency::Congruent, Congruency::Incongruent] {
            specs.push(GenerateSpec::new(p, c));
        }
    }
    specs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbesSection {
    pub n_pairs: usize,
    pub seed: u64,
    pub eval_batch: usize,
    pub holdout: Holdout,
    pub generate: Vec<GenerateSpec>,
    /// Ready-made suites in JSON-lines form.
    pub files: Vec<PathBuf>,
}

impl Default for ProbesSection {
    fn default() -> Self {
        ProbesSection {
            n_pairs: 200,
            seed: 99,
            eval_batch: DEFAULT_EVAL_BATCH,
            holdout: Holdout::Shared,
            generate: default_generate(),
            files: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StagesSection {
    /// Stage map file; the built-in three-stage map when absent.
    pub map: Option<PathBuf>,
    pub rule: OrderRule,
    /// Steps at which the model appears as an agent in the stage matrix;
    /// empty means every 500 steps plus the last.
    pub matrix_steps: Vec<u64>,
}

impl Default for StagesSection {
    fn default() -> Self {
        StagesSection { map: None, rule: OrderRule::FirstCrossing, matrix_steps: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub base_seed: u64,
    pub n_seeds: usize,
    /// Output directory; relative paths resolve against the config file.
    pub out_dir: PathBuf,
    pub data: DataSection,
    pub tokenizer: TokenizerSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub probes: ProbesSection,
    pub analysis: AnalysisSettings,
    pub stages: StagesSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            base_seed: 0,
            n_seeds: 8,
            out_dir: PathBuf::from("out"),
            data: DataSection::default(),
            tokenizer: TokenizerSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            probes: ProbesSection::default(),
            analysis: AnalysisSettings::default(),
            stages: StagesSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_string(), msg: e.to_string() })
    }

    /// Reads a config and makes its relative paths absolute with respect
    /// to the config's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        if let Some(p) = self.data.grammar.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.corpus.as_mut() {
            fix(p);
        }
        for p in &mut self.probes.files {
            fix(p);
        }
        if let Some(p) = self.stages.map.as_mut() {
            fix(p);
        }
    }

    /// Files the run reads besides the config itself.
    pub fn input_files(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = Vec::new();
        v.extend(self.data.grammar.as_deref());
        v.extend(self.data.corpus.as_deref());
        v.extend(self.probes.files.iter().map(PathBuf::as_path));
        v.extend(self.stages.map.as_deref());
        v
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.n_seeds == 0 {
            return bad("n_seeds must be at least 1".into());
        }
        if self.data.corpus.is_none() && self.data.n_sentences == 0 {
            return bad("data.n_sentences must be positive".into());
        }
        if self.train.batch_size == 0 || self.train.checkpoint_every == 0 {
            return bad("train.batch_size and train.checkpoint_every must be positive".into());
        }
        if !(self.train.lr.is_finite() && self.train.lr > 0.0) {
            return bad(format!("train.lr must be positive, got {}", self.train.lr));
        }
        if self.probes.eval_batch == 0 || self.probes.n_pairs < 2 {
            return bad("probes.eval_batch must be positive and probes.n_pairs at least 2".into());
        }
        if self.probes.generate.is_empty() && self.probes.files.is_empty() {
            return bad("no probe suites configured".into());
        }
        let mut ids: Vec<String> = self.probes.generate.iter().map(GenerateSpec::probe_id).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("probe id `{}` generated twice", w[0]));
        }
        self.analysis.validate().map_err(|e| ConfigError::Invalid(format!("analysis: {e}")))?;
        self.model_config(0, 1).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for p in self.input_files() {
            if !p.is_file() {
                return Err(ConfigError::MissingFile(p.to_path_buf()));
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.base_seed + i).collect()
    }

    pub fn model_config(&self, seed: u64, vocab_size: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            n_layers: m.n_layers,
            n_heads: m.n_heads,
            d_model: m.d_model,
            d_ff: m.d_ff,
            context_len: m.context_len,
            vocab_size,
            seed,
        }
    }
}
