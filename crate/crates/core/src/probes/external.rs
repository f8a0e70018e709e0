//! Scoring from per-token log-probabilities produced elsewhere, one JSON
//! object per line: `{"pair_id", "side", "tokens", "logprobs"}`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{pair_scores_accuracy, PairScore, ProbeError, ProbeSuite, SuiteEval};
use crate::model::{Parameters, Scalar};
use crate::tokenizer::{Vocabulary, PAD_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Good,
    Bad,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Good => "good",
            Side::Bad => "bad",
        })
    }
}

/// `logprobs[i]` is log P(tokens[i] | tokens[..i]); entry 0 is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalRecord {
    pub pair_id: String,
    pub side: Side,
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
}

pub fn parse_external_logprobs(text: &str, origin: &str) -> Result<Vec<ExternalRecord>, ProbeError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let malformed = |msg: String| ProbeError::Malformed { path: origin.to_string(), line: i + 1, msg };
        let rec: ExternalRecord = serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
        if rec.logprobs.iter().any(|x| !x.is_finite()) {
            return Err(malformed("non-finite log-probability".into()));
        }
        out.push(rec);
    }
    Ok(out)
}

fn is_punct_token(token: &str, punctuation: &str) -> bool {
    let t = token.trim();
    !t.is_empty() && t.chars().all(|c| punctuation.contains(c))
}

fn squeeze(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Rebuilds pair scores from external log-probabilities with the same rule
/// as native scoring: the first token and punctuation tokens (trimmed token
/// text made only of `punctuation` characters) are skipped.
pub fn ingest_external_logprobs(
    suite: &ProbeSuite,
    text: &str,
    origin: &str,
    punctuation: &str,
) -> Result<SuiteEval, ProbeError> {
    let records = parse_external_logprobs(text, origin)?;
    if records.is_empty() {
        return Err(ProbeError::EmptyFile(suite.pairs.len()));
    }
    let known: HashMap<&str, usize> = suite.pairs.iter().enumerate().map(|(i, p)| (p.pair_id.as_str(), i)).collect();
    let mut by_key: HashMap<(usize, Side), ExternalRecord> = HashMap::new();
    for rec in records {
        let Some(&idx) = known.get(rec.pair_id.as_str()) else {
            return Err(ProbeError::UnknownPair(rec.pair_id));
        };
        if rec.tokens.len() != rec.logprobs.len() {
            return Err(ProbeError::TokenCountMismatch {
                pair_id: rec.pair_id,
                side: rec.side,
                tokens: rec.tokens.len(),
                logprobs: rec.logprobs.len(),
            });
        }
        let pair = &suite.pairs[idx];
        let sentence = match rec.side {
            Side::Good => &pair.grammatical,
            Side::Bad => &pair.ungrammatical,
        };
        let spelled = rec.tokens.concat();
        if squeeze(&spelled) != squeeze(sentence) {
            return Err(ProbeError::TokenTextMismatch {
                pair_id: rec.pair_id,
                side: rec.side,
                expected: sentence.clone(),
                found: spelled,
            });
        }
        let key = (idx, rec.side);
        if by_key.contains_key(&key) {
            return Err(ProbeError::DuplicateRecord { pair_id: rec.pair_id, side: rec.side });
        }
        by_key.insert(key, rec);
    }
    let mut scores = Vec::with_capacity(suite.pairs.len());
    for (idx, pair) in suite.pairs.iter().enumerate() {
        let mut side_score = |side: Side| -> Result<f64, ProbeError> {
            let rec = by_key
                .remove(&(idx, side))
                .ok_or_else(|| ProbeError::MissingPair { pair_id: pair.pair_id.clone(), side })?;
            Ok(rec
                .tokens
                .iter()
                .zip(&rec.logprobs)
                .skip(1)
                .filter(|(t, _)| !is_punct_token(t, punctuation))
                .map(|(_, lp)| lp)
                .sum())
        };
        let good = side_score(Side::Good)?;
        let bad = side_score(Side::Bad)?;
        scores.push(PairScore::new(&pair.pair_id, good, bad));
    }
    Ok(pair_scores_accuracy(suite, scores))
}

/// Writes a model's per-token log-probabilities for every sentence of a
/// suite in the external format. Entry 0 of each record is 0.
pub fn export_logprobs<T: Scalar>(params: &Parameters<T>, vocab: &Vocabulary, suite: &ProbeSuite) -> Result<String, ProbeError> {
    let mut out = String::new();
    for pair in &suite.pairs {
        for (side, sentence) in [(Side::Good, &pair.grammatical), (Side::Bad, &pair.ungrammatical)] {
            let ids = vocab.encode(sentence);
            if ids.len() < 2 {
                return Err(ProbeError::TooShort { pair_id: pair.pair_id.clone(), sentence: sentence.clone() });
            }
            if ids.len() > params.config.context_len {
                return Err(ProbeError::TooLong {
                    pair_id: pair.pair_id.clone(),
                    sentence: sentence.clone(),
                    len: ids.len(),
                    max: params.config.context_len,
                });
            }
            debug_assert!(!ids.contains(&PAD_ID));
            let pass = params.forward_batch(&ids, 1, ids.len(), &[0])?;
            let mut logprobs = vec![0.0];
            logprobs.extend((1..ids.len()).map(|t| pass.row(0, t - 1)[ids[t] as usize].as_f64()));
            let rec = ExternalRecord {
                pair_id: pair.pair_id.clone(),
                side,
                tokens: ids.iter().map(|&id| vocab.token_text(id)).collect(),
                logprobs,
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
    }
    Ok(out)
}
