//! The staged experiment: data → train → eval → analyze → report.
//!
//! Every stage records a fingerprint of its inputs and the hashes of its
//! outputs in the run manifest, and is skipped when both still match.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::childcmp::{compare_orders, learned_matrix, ChildCmpError, LearnedGrid, StageComparison, StageMap};
use crate::config::{ConfigError, RunConfig};
use crate::corpus::{generate_corpus, token_stream, BatchPlan, CorpusError, GrammarSpec};
use crate::manifest::{hash_file, sha256_hex, write_if_changed, Fingerprint, Manifest};
use crate::model::{checkpoint_path, list_checkpoints, load_checkpoint_expecting, train, ModelError, TrainSettings};
use crate::probes::{eval_suite, generate_suite_with, split_lexicon, EvalRow, ProbeError, ProbeSuite};
use crate::report::ReportBundle;
use crate::tokenizer::{train_bpe, TokenizerError, Vocabulary};
use crate::trajectory::{analyze, Analysis, EvalMatrix, TrajectoryError};

pub const JOBS_ENV: &str = "TRAJ_LAB_JOBS";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CORPUS_FILE: &str = "data/corpus.txt";
pub const VOCAB_FILE: &str = "data/vocab.txt";
pub const GRAMMAR_FILE: &str = "data/grammar.toml";
pub const EVAL_FILE: &str = "eval/eval.csv";
pub const ANALYSIS_FILE: &str = "analysis/analysis.json";
const SEED_GUARD: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Data,
    Train,
    Eval,
    Analyze,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Data, Stage::Train, Stage::Eval, Stage::Analyze, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Data => "data",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| PipelineError::UnknownStage(s.to_string()))
    }
}

/// Parses a comma-separated stage list, returned in pipeline order.
pub fn parse_stages(list: &str) -> Result<Vec<Stage>, PipelineError> {
    let mut v: Vec<Stage> = list.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>()?;
    v.sort();
    v.dedup();
    Ok(v)
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown stage `{0}` (expected data, train, eval, analyze or report)")]
    UnknownStage(String),
    #[error("stage `{stage}` needs {} from stage `{needs}`; run that stage first", .missing.display())]
    MissingPrerequisite { stage: Stage, needs: Stage, missing: PathBuf },
    #[error("{}: existing checkpoints were produced with different settings ({detail}); use a fresh output directory", .dir.display())]
    ConfigMismatch { dir: PathBuf, detail: String },
    #[error("duplicate probe id `{0}`")]
    DuplicateProbe(String),
    #[error("jobs must be a positive integer, got `{0}`")]
    BadJobs(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Stages(#[from] ChildCmpError),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Worker count: `TRAJ_LAB_JOBS` wins over the requested value, which wins
/// over the number of available cores.
pub fn resolve_jobs(requested: Option<usize>) -> Result<usize, PipelineError> {
    if let Ok(v) = std::env::var(JOBS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(PipelineError::BadJobs(v)),
        };
    }
    match requested {
        Some(0) => Err(PipelineError::BadJobs("0".into())),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    UpToDate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub stages: Vec<(Stage, StageOutcome)>,
}

/// Guard stored next to each seed's checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SeedGuard {
    model: crate::model::ModelConfig,
    train: TrainSettings,
    data_seed: u64,
    corpus_sha256: String,
    vocab_sha256: String,
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join("train").join(format!("seed_{seed}"))
}

pub fn suite_path(out: &Path, probe_id: &str) -> PathBuf {
    out.join("probes").join(format!("{probe_id}.jsonl"))
}

/// Steps whose checkpoints the evaluation expects for one seed.
pub fn checkpoint_steps(max_steps: u64, every: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (0..=max_steps).step_by(every as usize).collect();
    if v.last() != Some(&max_steps) {
        v.push(max_steps);
    }
    v
}

struct Run<'a> {
    cfg: &'a RunConfig,
    out: PathBuf,
    manifest: Manifest,
    pool: rayon::ThreadPool,
}

/// Hash of the config with the output directory left out and every
/// referenced file replaced by its content hash, so that the same
/// experiment hashes the same wherever it lives.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.out_dir = PathBuf::new();
    let by_content = |p: &mut PathBuf| {
        *p = PathBuf::from(hash_file(p).unwrap_or_else(|_| "missing".into()));
    };
    c.data.grammar.as_mut().map(by_content);
    c.data.corpus.as_mut().map(by_content);
    c.probes.files.iter_mut().for_each(by_content);
    c.stages.map.as_mut().map(by_content);
    sha256_hex(c.to_toml_string().as_bytes())
}

/// Runs the requested stages in pipeline order.
pub fn run_pipeline(cfg: &RunConfig, stages: &[Stage], jobs: Option<usize>) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let jobs = resolve_jobs(jobs)?;
    let out = cfg.out_dir.clone();
    std::fs::create_dir_all(&out)?;
    let mut manifest = Manifest::load(&out)?.unwrap_or_default();
    manifest.tool_version = TOOL_VERSION.to_string();
    manifest.config_hash = config_hash(cfg);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| PipelineError::Pool(e.to_string()))?;
    let mut run = Run { cfg, out, manifest, pool };
    let mut order = stages.to_vec();
    order.sort();
    order.dedup();
    let mut done = Vec::new();
    for stage in order {
        let outcome = match stage {
            Stage::Data => run.data()?,
            Stage::Train => run.train()?,
            Stage::Eval => run.eval()?,
            Stage::Analyze => run.analyze()?,
            Stage::Report => run.report()?,
        };
        info!("stage {stage}: {outcome:?}");
        done.push((stage, outcome));
        run.manifest.save(&run.out)?;
    }
    run.manifest.save(&run.out)?;
    Ok(RunReport { out_dir: run.out, stages: done })
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

impl Run<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn require(&self, stage: Stage, needs: Stage, path: &Path) -> Result<(), PipelineError> {
        if path.is_file() {
            Ok(())
        } else {
            Err(PipelineError::MissingPrerequisite { stage, needs, missing: path.to_path_buf() })
        }
    }

    fn hashes(&self, files: &[PathBuf]) -> Result<BTreeMap<String, String>, PipelineError> {
        files.iter().map(|p| Ok((rel(&self.out, p), hash_file(p)?))).collect()
    }

    fn finish(&mut self, stage: Stage, inputs: String, files: &[PathBuf]) -> Result<StageOutcome, PipelineError> {
        let outputs = self.hashes(files)?;
        self.manifest.record(stage.name(), inputs, outputs);
        Ok(StageOutcome::Ran)
    }

    fn probe_ids(&self) -> Result<Vec<String>, PipelineError> {
        let mut ids: Vec<String> = self.cfg.probes.generate.iter().map(|g| g.probe_id()).collect();
        for f in &self.cfg.probes.files {
            ids.push(ProbeSuite::load(f)?.probe_id);
        }
        let mut seen = std::collections::HashSet::new();
        for id in &ids {
            if !seen.insert(id.clone()) {
                return Err(PipelineError::DuplicateProbe(id.clone()));
            }
        }
        Ok(ids)
    }

    fn data_inputs(&self) -> Result<String, PipelineError> {
        let c = self.cfg;
        let mut fp = Fingerprint::new();
        fp.add("version", TOOL_VERSION.as_bytes())
            .add("data", &(c.data.n_sentences as u64).to_le_bytes())
            .add("tokenizer", toml::to_string(&c.tokenizer).unwrap_or_default().as_bytes())
            .add("probes", serde_json::to_string(&(&c.probes.n_pairs, &c.probes.seed, &c.probes.holdout, &c.probes.generate)).unwrap_or_default().as_bytes());
        for (label, p) in [("grammar", &c.data.grammar), ("corpus", &c.data.corpus)] {
            if let Some(p) = p {
                fp.add(label, hash_file(p)?.as_bytes());
            }
        }
        for p in &c.probes.files {
            fp.add("suite", hash_file(p)?.as_bytes());
        }
        Ok(fp.finish())
    }

    fn data(&mut self) -> Result<StageOutcome, PipelineError> {
        let inputs = self.data_inputs()?;
        if self.manifest.is_current("data", &inputs, &self.out) {
            return Ok(StageOutcome::UpToDate);
        }
        let c = self.cfg;
        let grammar = match &c.data.grammar {
            Some(p) => GrammarSpec::load(p)?,
            None => GrammarSpec::default(),
        };
        let (train_grammar, probe_grammar) = split_lexicon(&grammar, &c.probes.holdout)?;
        let text = match &c.data.corpus {
            Some(p) => std::fs::read_to_string(p)?,
            None => generate_corpus(&train_grammar, c.data.n_sentences)?,
        };
        let vocab = train_bpe(&text, c.tokenizer.vocab_size, &c.tokenizer.punctuation)?;
        let mut files = vec![self.path(CORPUS_FILE), self.path(VOCAB_FILE), self.path(GRAMMAR_FILE)];
        write_if_changed(&files[0], text.as_bytes())?;
        write_if_changed(&files[1], vocab.to_text().as_bytes())?;
        write_if_changed(&files[2], grammar.to_toml_string().as_bytes())?;

        let ids = self.probe_ids()?;
        for spec in &c.probes.generate {
            let id = spec.probe_id();
            let digest = Sha256::digest(id.as_bytes());
            let seed = c.probes.seed ^ u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));
            let mut suite = generate_suite_with(&probe_grammar, spec.phenomenon, spec.congruency, spec.n_pairs.unwrap_or(c.probes.n_pairs), seed)?;
            suite.probe_id = id.clone();
            for p in &mut suite.pairs {
                p.probe_id = id.clone();
            }
            let path = suite_path(&self.out, &id);
            write_if_changed(&path, suite.to_jsonl().as_bytes())?;
            files.push(path);
        }
        for f in &c.probes.files {
            let suite = ProbeSuite::load(f)?;
            let path = suite_path(&self.out, &suite.probe_id);
            write_if_changed(&path, suite.to_jsonl().as_bytes())?;
            files.push(path);
        }
        info!("data: {} bytes of text, vocabulary {}, {} probe suites", text.len(), vocab.size(), ids.len());
        self.finish(Stage::Data, inputs, &files)
    }

    fn train_inputs(&self) -> Result<(String, String, String), PipelineError> {
        let corpus = self.path(CORPUS_FILE);
        let vocab = self.path(VOCAB_FILE);
        self.require(Stage::Train, Stage::Data, &corpus)?;
        self.require(Stage::Train, Stage::Data, &vocab)?;
        let (ch, vh) = (hash_file(&corpus)?, hash_file(&vocab)?);
        let c = self.cfg;
        let mut fp = Fingerprint::new();
        fp.add("version", TOOL_VERSION.as_bytes())
            .add("corpus", ch.as_bytes())
            .add("vocab", vh.as_bytes())
            .add("model", toml::to_string(&c.model).unwrap_or_default().as_bytes())
            .add("train", toml::to_string(&c.train).unwrap_or_default().as_bytes())
            .add("seeds", format!("{:?}", c.seeds()).as_bytes());
        Ok((fp.finish(), ch, vh))
    }

    fn expected_checkpoints(&self) -> Vec<PathBuf> {
        let steps = checkpoint_steps(self.cfg.train.max_steps, self.cfg.train.checkpoint_every);
        self.cfg
            .seeds()
            .iter()
            .flat_map(|&s| steps.iter().map(move |&t| checkpoint_path(&seed_dir(&self.out, s), t)))
            .collect()
    }

    fn train(&mut self) -> Result<StageOutcome, PipelineError> {
        let (inputs, corpus_sha, vocab_sha) = self.train_inputs()?;
        if self.manifest.is_current("train", &inputs, &self.out) {
            return Ok(StageOutcome::UpToDate);
        }
        let c = self.cfg;
        let vocab = Vocabulary::load(&self.path(VOCAB_FILE))?;
        let text = std::fs::read_to_string(self.path(CORPUS_FILE))?;
        // The data order is shared by all seeds; only the initialization differs.
        let plan =
            BatchPlan::from_tokens(token_stream(&text, &vocab), c.model.context_len, c.train.batch_size, c.base_seed)?;
        let settings = TrainSettings {
            adam: c.train.adam(),
            max_steps: c.train.max_steps,
            checkpoint_every: c.train.checkpoint_every,
        };
        let seeds = c.seeds();
        for &seed in &seeds {
            let guard = SeedGuard {
                model: c.model_config(seed, vocab.size()),
                train: settings.clone(),
                data_seed: c.base_seed,
                corpus_sha256: corpus_sha.clone(),
                vocab_sha256: vocab_sha.clone(),
            };
            self.check_guard(&seed_dir(&self.out, seed), &guard)?;
        }
        let out = self.out.clone();
        self.pool.install(|| {
            seeds.par_iter().try_for_each(|&seed| -> Result<(), PipelineError> {
                let cfg = c.model_config(seed, vocab.size());
                let summary = train::<f32>(&cfg, &settings, &plan, c.base_seed, &seed_dir(&out, seed))?;
                info!("seed {seed}: {} checkpoints, final loss {:?}", summary.checkpoints.len(), summary.final_loss);
                Ok(())
            })
        })?;
        let mut files = self.expected_checkpoints();
        for &seed in &seeds {
            let dir = seed_dir(&self.out, seed);
            files.push(dir.join(SEED_GUARD));
            files.push(dir.join(crate::model::TRAIN_LOG));
        }
        self.finish(Stage::Train, inputs, &files)
    }

    /// Refuses to continue checkpoints that came from other settings.
    fn check_guard(&self, dir: &Path, guard: &SeedGuard) -> Result<(), PipelineError> {
        let path = dir.join(SEED_GUARD);
        let body = serde_json::to_string_pretty(guard).expect("guard serializes") + "\n";
        match std::fs::read_to_string(&path) {
            Ok(old) if old == body => Ok(()),
            Ok(old) => {
                let detail = match serde_json::from_str::<SeedGuard>(&old) {
                    Ok(prev) if prev.model != guard.model => "model config differs".to_string(),
                    Ok(prev) if prev.train != guard.train => "training settings differ".to_string(),
                    Ok(_) => "training data differs".to_string(),
                    Err(e) => format!("unreadable {}: {e}", path.display()),
                };
                Err(PipelineError::ConfigMismatch { dir: dir.to_path_buf(), detail })
            }
            Err(_) => {
                if dir.exists() && !list_checkpoints(dir)?.is_empty() {
                    return Err(PipelineError::ConfigMismatch {
                        dir: dir.to_path_buf(),
                        detail: format!("checkpoints without {SEED_GUARD}"),
                    });
                }
                write_if_changed(&path, body.as_bytes())?;
                Ok(())
            }
        }
    }

    fn eval(&mut self) -> Result<StageOutcome, PipelineError> {
        let c = self.cfg;
        let ids = self.probe_ids()?;
        let suites_paths: Vec<PathBuf> = ids.iter().map(|id| suite_path(&self.out, id)).collect();
        for p in &suites_paths {
            self.require(Stage::Eval, Stage::Data, p)?;
        }
        self.require(Stage::Eval, Stage::Data, &self.path(VOCAB_FILE))?;
        let ckpts = self.expected_checkpoints();
        for p in &ckpts {
            self.require(Stage::Eval, Stage::Train, p)?;
        }
        let mut fp = Fingerprint::new();
        fp.add("version", TOOL_VERSION.as_bytes())
            .add("eval_batch", &(c.probes.eval_batch as u64).to_le_bytes())
            .add("vocab", hash_file(&self.path(VOCAB_FILE))?.as_bytes());
        for p in suites_paths.iter().chain(&ckpts) {
            fp.add(&rel(&self.out, p), hash_file(p)?.as_bytes());
        }
        let inputs = fp.finish();
        if self.manifest.is_current("eval", &inputs, &self.out) {
            return Ok(StageOutcome::UpToDate);
        }
        let vocab = Vocabulary::load(&self.path(VOCAB_FILE))?;
        let suites: Vec<ProbeSuite> = suites_paths.iter().map(|p| ProbeSuite::load(p)).collect::<Result<_, _>>()?;
        let steps = checkpoint_steps(c.train.max_steps, c.train.checkpoint_every);
        let jobs: Vec<(u64, u64)> = c.seeds().iter().flat_map(|&s| steps.iter().map(move |&t| (s, t))).collect();
        let out = self.out.clone();
        let results: Vec<Vec<EvalRow>> = self.pool.install(|| {
            jobs.par_iter()
                .map(|&(seed, step)| -> Result<Vec<EvalRow>, PipelineError> {
                    let cfg = c.model_config(seed, vocab.size());
                    let rec = load_checkpoint_expecting::<f32>(&checkpoint_path(&seed_dir(&out, seed), step), &cfg)
                        .map_err(ModelError::from)?;
                    let mut rows = Vec::new();
                    for s in &suites {
                        let e = eval_suite(&rec.params, &vocab, s, c.probes.eval_batch)?;
                        rows.extend(EvalRow::from_eval(seed, step, &e));
                    }
                    Ok(rows)
                })
                .collect::<Result<_, _>>()
        })?;
        let rows: Vec<EvalRow> = results.into_iter().flatten().collect();
        let path = self.path(EVAL_FILE);
        write_if_changed(&path, EvalRow::to_csv(&rows).as_bytes())?;
        info!("eval: {} checkpoints × {} suites", jobs.len(), suites.len());
        self.finish(Stage::Eval, inputs, &[path])
    }

    fn stage_map(&self) -> Result<StageMap, PipelineError> {
        Ok(match &self.cfg.stages.map {
            Some(p) => StageMap::load(p)?,
            None => StageMap::default(),
        })
    }

    fn downstream_inputs(&self, stage: Stage) -> Result<String, PipelineError> {
        let eval = self.path(EVAL_FILE);
        self.require(stage, Stage::Eval, &eval)?;
        let c = self.cfg;
        let mut fp = Fingerprint::new();
        fp.add("version", TOOL_VERSION.as_bytes())
            .add("eval", hash_file(&eval)?.as_bytes())
            .add("analysis", toml::to_string(&c.analysis).unwrap_or_default().as_bytes())
            .add("stages", serde_json::to_string(&(&c.stages.rule, &c.stages.matrix_steps)).unwrap_or_default().as_bytes())
            .add("map", self.stage_map()?.to_toml_string().as_bytes());
        if stage == Stage::Report {
            fp.add("config", config_hash(c).as_bytes());
        }
        Ok(fp.finish())
    }

    fn load_matrix(&self) -> Result<EvalMatrix, PipelineError> {
        let path = self.path(EVAL_FILE);
        let text = std::fs::read_to_string(&path)?;
        let rows = EvalRow::from_csv(&text, &path.display().to_string())?;
        Ok(EvalMatrix::from_rows(&rows)?)
    }

    fn matrix_steps(&self, m: &EvalMatrix) -> Vec<u64> {
        if !self.cfg.stages.matrix_steps.is_empty() {
            return self.cfg.stages.matrix_steps.clone();
        }
        let last = *m.steps.last().expect("matrix has steps");
        let mut v: Vec<u64> = m.steps.iter().copied().filter(|s| *s > 0 && s % 500 == 0).collect();
        if v.last() != Some(&last) {
            v.push(last);
        }
        v
    }

    /// Stage comparison, or `None` when the mapped probes were not evaluated.
    fn stages_for(&self, m: &EvalMatrix) -> Result<Option<(StageComparison, LearnedGrid)>, PipelineError> {
        let map = self.stage_map()?;
        if let Some(s) = map.stages.iter().find(|s| m.probe_index(&s.probe_id).is_err()) {
            warn!("stage comparison skipped: probe `{}` was not evaluated", s.probe_id);
            return Ok(None);
        }
        let cmp = compare_orders(m, &map, self.cfg.stages.rule, self.cfg.analysis.window)?;
        let grid = learned_matrix(m, &map, &self.matrix_steps(m))?;
        Ok(Some((cmp, grid)))
    }

    fn analyze(&mut self) -> Result<StageOutcome, PipelineError> {
        let inputs = self.downstream_inputs(Stage::Analyze)?;
        if self.manifest.is_current("analyze", &inputs, &self.out) {
            return Ok(StageOutcome::UpToDate);
        }
        let m = self.load_matrix()?;
        let a = analyze(&m, &self.cfg.analysis)?;
        let mut files = vec![self.path(ANALYSIS_FILE)];
        write_if_changed(&files[0], a.to_json().as_bytes())?;
        for (name, body) in a.csv_tables() {
            let p = self.path(&format!("analysis/{name}"));
            write_if_changed(&p, body.as_bytes())?;
            files.push(p);
        }
        if let Some((cmp, grid)) = self.stages_for(&m)? {
            for (name, body) in [("stage_comparison.json", cmp.to_json()), ("stage_matrix.csv", grid.to_csv())] {
                let p = self.path(&format!("analysis/{name}"));
                write_if_changed(&p, body.as_bytes())?;
                files.push(p);
            }
        }
        log_headline(&a);
        self.finish(Stage::Analyze, inputs, &files)
    }

    fn report(&mut self) -> Result<StageOutcome, PipelineError> {
        self.require(Stage::Report, Stage::Analyze, &self.path(ANALYSIS_FILE))?;
        let inputs = self.downstream_inputs(Stage::Report)?;
        if self.manifest.is_current("report", &inputs, &self.out) {
            return Ok(StageOutcome::UpToDate);
        }
        let m = self.load_matrix()?;
        let a = analyze(&m, &self.cfg.analysis)?;
        let stages = self.stages_for(&m)?;
        let meta = serde_json::json!({
            "tool_version": TOOL_VERSION,
            "config_hash": config_hash(self.cfg),
            "seeds": m.seeds,
            "steps": m.steps,
            "probes": m.probes,
        });
        let meta = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
        let bundle = ReportBundle::build(&m, &a, stages.as_ref().map(|(c, g)| (c, g)), &meta)?;
        let dir = self.path("report");
        bundle.write(&dir)?;
        let files: Vec<PathBuf> = bundle.files.iter().map(|(name, _)| dir.join(name)).collect();
        self.finish(Stage::Report, inputs, &files)
    }
}

fn log_headline(a: &Analysis) {
    if let Some(r) = &a.rank_correlation {
        info!("rank correlation {:.3} (p = {:.4}, {} probes)", r.observed, r.p_value, r.n_probes);
    }
    if let Some(anova) = &a.anova {
        info!("tercile ANOVA F = {:.3}, p = {:.4}", anova.f, anova.p_value);
    }
}
