use std::fmt::Write as _;

use super::{MinimalPair, PairScore, ProbeError, ProbeSuite, Stratum};
use crate::model::{ModelError, Parameters, Scalar};
use crate::tokenizer::{Vocabulary, PAD_ID};

/// Sentences per forward batch during evaluation.
pub const DEFAULT_EVAL_BATCH: usize = 300;

fn encode_checked<T: Scalar>(
    params: &Parameters<T>,
    vocab: &Vocabulary,
    pair_id: &str,
    sentence: &str,
) -> Result<Vec<u32>, ProbeError> {
    let ids = vocab.encode(sentence);
    if ids.len() < 2 {
        return Err(ProbeError::TooShort { pair_id: pair_id.to_string(), sentence: sentence.to_string() });
    }
    if ids.len() > params.config.context_len {
        return Err(ProbeError::TooLong {
            pair_id: pair_id.to_string(),
            sentence: sentence.to_string(),
            len: ids.len(),
            max: params.config.context_len,
        });
    }
    Ok(ids)
}

/// Summed log-probabilities of already encoded sequences, `batch` sequences
/// per left-padded forward pass. Position 0 and punctuation targets are
/// not scored.
fn score_ids<T: Scalar>(
    params: &Parameters<T>,
    vocab: &Vocabulary,
    seqs: &[Vec<u32>],
    batch: usize,
) -> Result<Vec<f64>, ModelError> {
    let batch = batch.max(1);
    let mut out = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(batch) {
        let seq = chunk.iter().map(Vec::len).max().unwrap_or(0);
        let mut tokens = Vec::with_capacity(chunk.len() * seq);
        let mut pad = Vec::with_capacity(chunk.len());
        for ids in chunk {
            let p = seq - ids.len();
            tokens.extend(std::iter::repeat_n(PAD_ID, p));
            tokens.extend_from_slice(ids);
            pad.push(p);
        }
        let pass = params.forward_batch(&tokens, chunk.len(), seq, &pad)?;
        for (b, ids) in chunk.iter().enumerate() {
            let mut total = 0.0f64;
            for t in 1..ids.len() {
                if vocab.is_punctuation(ids[t]) {
                    continue;
                }
                total += pass.row(b, pad[b] + t - 1)[ids[t] as usize].as_f64();
            }
            out.push(total);
        }
    }
    Ok(out)
}

/// Sum of next-token log-probabilities over positions `1..n`, skipping
/// punctuation targets.
pub fn score_sentence<T: Scalar>(params: &Parameters<T>, vocab: &Vocabulary, sentence: &str) -> Result<f64, ProbeError> {
    let ids = encode_checked(params, vocab, "", sentence)?;
    Ok(score_ids(params, vocab, &[ids], 1)?[0])
}

/// Scores many sentences with batched left-padded passes.
pub fn score_sentences<T: Scalar>(
    params: &Parameters<T>,
    vocab: &Vocabulary,
    sentences: &[&str],
    batch: usize,
) -> Result<Vec<f64>, ProbeError> {
    let seqs = sentences.iter().map(|s| encode_checked(params, vocab, "", s)).collect::<Result<Vec<_>, _>>()?;
    Ok(score_ids(params, vocab, &seqs, batch)?)
}

pub fn compare_pair<T: Scalar>(params: &Parameters<T>, vocab: &Vocabulary, pair: &MinimalPair) -> Result<PairScore, ProbeError> {
    let good = encode_checked(params, vocab, &pair.pair_id, &pair.grammatical)?;
    let bad = encode_checked(params, vocab, &pair.pair_id, &pair.ungrammatical)?;
    let s = score_ids(params, vocab, &[good, bad], 2)?;
    Ok(PairScore::new(&pair.pair_id, s[0], s[1]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumAccuracy {
    pub stratum: Stratum,
    pub n_pairs: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEval {
    pub probe_id: String,
    pub scores: Vec<PairScore>,
    /// Non-empty strata only; `All` comes first.
    pub strata: Vec<StratumAccuracy>,
}

impl SuiteEval {
    pub fn accuracy(&self) -> f64 {
        self.strata[0].accuracy
    }

    pub fn stratum(&self, s: Stratum) -> Option<&StratumAccuracy> {
        self.strata.iter().find(|x| x.stratum == s)
    }
}

/// Accuracy per stratum for scores aligned with `suite.pairs`.
pub fn stratify(suite: &ProbeSuite, scores: &[PairScore]) -> Vec<StratumAccuracy> {
    assert_eq!(suite.pairs.len(), scores.len());
    let mut out = Vec::new();
    for stratum in Stratum::ALL {
        let (mut n, mut correct) = (0usize, 0usize);
        for (p, s) in suite.pairs.iter().zip(scores) {
            if stratum.contains(&p.meta) {
                n += 1;
                correct += s.correct as usize;
            }
        }
        if n > 0 {
            out.push(StratumAccuracy { stratum, n_pairs: n, accuracy: correct as f64 / n as f64 });
        }
    }
    out
}

pub fn pair_scores_accuracy(suite: &ProbeSuite, scores: Vec<PairScore>) -> SuiteEval {
    let strata = stratify(suite, &scores);
    SuiteEval { probe_id: suite.probe_id.clone(), scores, strata }
}

/// Scores every pair of a suite. Sentences go through the model `batch` at
/// a time with left padding.
pub fn eval_suite<T: Scalar>(
    params: &Parameters<T>,
    vocab: &Vocabulary,
    suite: &ProbeSuite,
    batch: usize,
) -> Result<SuiteEval, ProbeError> {
    let mut seqs = Vec::with_capacity(2 * suite.pairs.len());
    for p in &suite.pairs {
        seqs.push(encode_checked(params, vocab, &p.pair_id, &p.grammatical)?);
        seqs.push(encode_checked(params, vocab, &p.pair_id, &p.ungrammatical)?);
    }
    let s = score_ids(params, vocab, &seqs, batch)?;
    let scores = suite.pairs.iter().enumerate().map(|(i, p)| PairScore::new(&p.pair_id, s[2 * i], s[2 * i + 1])).collect();
    Ok(pair_scores_accuracy(suite, scores))
}

/// One row of the evaluation table.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub seed: u64,
    pub step: u64,
    pub probe_id: String,
    pub stratum: Stratum,
    pub n_pairs: usize,
    pub accuracy: f64,
}

pub const EVAL_CSV_HEADER: &str = "seed,step,probe_id,stratum,n_pairs,accuracy";

impl EvalRow {
    pub fn from_eval(seed: u64, step: u64, eval: &SuiteEval) -> Vec<EvalRow> {
        eval.strata
            .iter()
            .map(|s| EvalRow {
                seed,
                step,
                probe_id: eval.probe_id.clone(),
                stratum: s.stratum,
                n_pairs: s.n_pairs,
                accuracy: s.accuracy,
            })
            .collect()
    }

    pub fn to_csv(rows: &[EvalRow]) -> String {
        let mut out = format!("{EVAL_CSV_HEADER}\n");
        for r in rows {
            let _ = writeln!(out, "{},{},{},{},{},{}", r.seed, r.step, r.probe_id, r.stratum, r.n_pairs, r.accuracy);
        }
        out
    }

    pub fn from_csv(text: &str, origin: &str) -> Result<Vec<EvalRow>, ProbeError> {
        let mut lines = text.lines().enumerate();
        let malformed = |line: usize, msg: String| ProbeError::Malformed { path: origin.to_string(), line, msg };
        match lines.next() {
            Some((_, h)) if h.trim() == EVAL_CSV_HEADER => {}
            _ => return Err(malformed(1, format!("expected header `{EVAL_CSV_HEADER}`"))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(malformed(i + 1, format!("expected 6 fields, found {}", f.len())));
            }
            let num = |s: &str, what: &str| malformed(i + 1, format!("bad {what} `{s}`"));
            rows.push(EvalRow {
                seed: f[0].parse().map_err(|_| num(f[0], "seed"))?,
                step: f[1].parse().map_err(|_| num(f[1], "step"))?,
                probe_id: f[2].to_string(),
                stratum: Stratum::from_name(f[3]).ok_or_else(|| num(f[3], "stratum"))?,
                n_pairs: f[4].parse().map_err(|_| num(f[4], "pair count"))?,
                accuracy: f[5].parse().map_err(|_| num(f[5], "accuracy"))?,
            });
        }
        Ok(rows)
    }
}
