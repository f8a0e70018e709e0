//! Minimal-pair probes: representation, file formats, generation and
//! forced-choice scoring.

mod external;
mod generate;
mod scoring;

pub use external::{export_logprobs, ingest_external_logprobs, parse_external_logprobs, ExternalRecord, Side};
pub use generate::{generate_suite, generate_suite_with, split_lexicon, Congruency, Holdout, Phenomenon};
pub use scoring::{
    compare_pair, eval_suite, pair_scores_accuracy, score_sentence, score_sentences, stratify, EvalRow, StratumAccuracy,
    SuiteEval, DEFAULT_EVAL_BATCH,
};

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Number};
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("pair {pair_id}: sentence {sentence:?} has fewer than 2 tokens")]
    TooShort { pair_id: String, sentence: String },
    #[error("pair {pair_id}: sentence {sentence:?} has {len} tokens, context holds {max}")]
    TooLong { pair_id: String, sentence: String, len: usize, max: usize },
    #[error("invalid pair {pair_id}: {msg}")]
    InvalidPair { pair_id: String, msg: String },
    #[error("suite {probe_id}: {msg}")]
    InvalidSuite { probe_id: String, msg: String },
    #[error("{path} line {line}: {msg}")]
    Malformed { path: String, line: usize, msg: String },
    #[error("log-prob file is empty but the suite has {0} pairs")]
    EmptyFile(usize),
    #[error("log-prob file lacks the {side} side of pair {pair_id}")]
    MissingPair { pair_id: String, side: Side },
    #[error("log-prob file mentions pair {0} which is not in the suite")]
    UnknownPair(String),
    #[error("log-prob file repeats the {side} side of pair {pair_id}")]
    DuplicateRecord { pair_id: String, side: Side },
    #[error("pair {pair_id} ({side}): {tokens} tokens but {logprobs} log-probabilities")]
    TokenCountMismatch { pair_id: String, side: Side, tokens: usize, logprobs: usize },
    #[error("pair {pair_id} ({side}): tokens spell {found:?}, suite sentence is {expected:?}")]
    TokenTextMismatch { pair_id: String, side: Side, expected: String, found: String },
    #[error("phenomenon `{0}` is not supported by the grammar: {1}")]
    Unsupported(String, String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Agreement annotations; absent fields mean the stratum does not apply.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub congruent: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_number: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attractor_number: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_verb_number: Option<Number>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinimalPair {
    pub pair_id: String,
    pub probe_id: String,
    pub grammatical: String,
    pub ungrammatical: String,
    pub meta: PairMeta,
}

impl MinimalPair {
    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |msg: &str| Err(ProbeError::InvalidPair { pair_id: self.pair_id.clone(), msg: msg.to_string() });
        if self.grammatical == self.ungrammatical {
            return bad("grammatical and ungrammatical sentences are identical");
        }
        if let (Some(c), Some(s), Some(a)) = (self.meta.congruent, self.meta.subject_number, self.meta.attractor_number) {
            if c != (s == a) {
                return bad("congruent flag disagrees with subject/attractor numbers");
            }
        }
        Ok(())
    }

    /// The same pair with the two sentences exchanged.
    pub fn swapped(&self) -> MinimalPair {
        MinimalPair {
            grammatical: self.ungrammatical.clone(),
            ungrammatical: self.grammatical.clone(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSuite {
    pub probe_id: String,
    pub phenomenon: String,
    pub pairs: Vec<MinimalPair>,
}

/// One line of a probe-suite file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairLine {
    pair_id: String,
    probe_id: String,
    phenomenon: String,
    good: String,
    bad: String,
    #[serde(default)]
    meta: PairMeta,
}

impl ProbeSuite {
    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |msg: String| Err(ProbeError::InvalidSuite { probe_id: self.probe_id.clone(), msg });
        if self.pairs.len() < 2 {
            return bad(format!("needs at least 2 pairs, has {}", self.pairs.len()));
        }
        let mut seen = HashSet::new();
        for p in &self.pairs {
            p.validate()?;
            if p.probe_id != self.probe_id {
                return bad(format!("pair {} belongs to probe {}", p.pair_id, p.probe_id));
            }
            if !seen.insert(p.pair_id.as_str()) {
                return bad(format!("duplicate pair id {}", p.pair_id));
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            let line = PairLine {
                pair_id: p.pair_id.clone(),
                probe_id: p.probe_id.clone(),
                phenomenon: self.phenomenon.clone(),
                good: p.grammatical.clone(),
                bad: p.ungrammatical.clone(),
                meta: p.meta.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("pair serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses a suite file; `origin` names the source in error messages.
    pub fn from_jsonl(text: &str, origin: &str) -> Result<Self, ProbeError> {
        let mut suite: Option<ProbeSuite> = None;
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let malformed = |msg: String| ProbeError::Malformed { path: origin.to_string(), line: i + 1, msg };
            let line: PairLine = serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
            let s = suite.get_or_insert_with(|| ProbeSuite {
                probe_id: line.probe_id.clone(),
                phenomenon: line.phenomenon.clone(),
                pairs: Vec::new(),
            });
            if line.phenomenon != s.phenomenon {
                return Err(malformed(format!("phenomenon {} differs from {}", line.phenomenon, s.phenomenon)));
            }
            s.pairs.push(MinimalPair {
                pair_id: line.pair_id,
                probe_id: line.probe_id,
                grammatical: line.good,
                ungrammatical: line.bad,
                meta: line.meta,
            });
        }
        let suite = suite.ok_or_else(|| ProbeError::Malformed {
            path: origin.to_string(),
            line: 0,
            msg: "file contains no pairs".into(),
        })?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn load(path: &Path) -> Result<Self, ProbeError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<(), ProbeError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}

/// Score of one pair: summed log-probabilities of both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScore {
    pub pair_id: String,
    pub logp_good: f64,
    pub logp_bad: f64,
    pub correct: bool,
}

impl PairScore {
    /// Strict comparison: ties count as incorrect.
    pub fn new(pair_id: &str, logp_good: f64, logp_bad: f64) -> Self {
        PairScore { pair_id: pair_id.to_string(), logp_good, logp_bad, correct: logp_good > logp_bad }
    }
}

/// Accuracy subsets of a suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stratum {
    All,
    Congruent,
    Incongruent,
    Singular,
    Plural,
    CongruentSingular,
    CongruentPlural,
    IncongruentSingular,
    IncongruentPlural,
}

impl Stratum {
    pub const ALL: [Stratum; 9] = [
        Stratum::All,
        Stratum::Congruent,
        Stratum::Incongruent,
        Stratum::Singular,
        Stratum::Plural,
        Stratum::CongruentSingular,
        Stratum::CongruentPlural,
        Stratum::IncongruentSingular,
        Stratum::IncongruentPlural,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stratum::All => "all",
            Stratum::Congruent => "congruent",
            Stratum::Incongruent => "incongruent",
            Stratum::Singular => "S",
            Stratum::Plural => "P",
            Stratum::CongruentSingular => "congruent-S",
            Stratum::CongruentPlural => "congruent-P",
            Stratum::IncongruentSingular => "incongruent-S",
            Stratum::IncongruentPlural => "incongruent-P",
        }
    }

    pub fn from_name(name: &str) -> Option<Stratum> {
        Stratum::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Whether a pair with `meta` belongs to this stratum.
    pub fn contains(self, meta: &PairMeta) -> bool {
        let cong = meta.congruent;
        let num = meta.correct_verb_number;
        match self {
            Stratum::All => true,
            Stratum::Congruent => cong == Some(true),
            Stratum::Incongruent => cong == Some(false),
            Stratum::Singular => num == Some(Number::Singular),
            Stratum::Plural => num == Some(Number::Plural),
            Stratum::CongruentSingular => cong == Some(true) && num == Some(Number::Singular),
            Stratum::CongruentPlural => cong == Some(true) && num == Some(Number::Plural),
            Stratum::IncongruentSingular => cong == Some(false) && num == Some(Number::Singular),
            Stratum::IncongruentPlural => cong == Some(false) && num == Some(Number::Plural),
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
