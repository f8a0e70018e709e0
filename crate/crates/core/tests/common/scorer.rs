use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use trajlab::corpus::{generate_corpus, GrammarSpec};
use trajlab::model::{ModelConfig, Parameters};
use trajlab::probes::{
    compare_pair, eval_suite, export_logprobs, generate_suite, ingest_external_logprobs, MinimalPair, Phenomenon, ProbeSuite,
};
use trajlab::tokenizer::{train_bpe, Vocabulary, DEFAULT_PUNCTUATION};

pub fn vocab() -> Vocabulary {
    let text = generate_corpus(&GrammarSpec::default(), 3000).unwrap();
    train_bpe(&text, 200, DEFAULT_PUNCTUATION).unwrap()
}

pub fn noisy_model(v: &Vocabulary, seed: u64) -> Parameters<f32> {
    let cfg = ModelConfig { n_layers: 2, n_heads: 2, d_model: 16, d_ff: 32, context_len: 24, vocab_size: v.size(), seed };
    let mut p = Parameters::<f64>::init(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.4).unwrap();
    for t in p.tensors_mut() {
        for x in t.data.iter_mut() {
            *x += noise.sample(&mut rng);
        }
    }
    p.cast()
}

/// 1,000 pairs: 200 from each phenomenon.
pub fn thousand_pairs() -> Vec<ProbeSuite> {
    let g = GrammarSpec::default();
    Phenomenon::ALL.iter().map(|&ph| generate_suite(&g, ph, 200, 17).unwrap()).collect()
}

pub fn with_suffix(suite: &ProbeSuite, suffix: &str) -> ProbeSuite {
    let mut s = suite.clone();
    for p in &mut s.pairs {
        p.grammatical.push_str(suffix);
        p.ungrammatical.push_str(suffix);
    }
    s
}

pub struct ScorerReport {
    pub pairs: usize,
    /// Pairs whose swap does not flip the outcome.
    pub flips: usize,
    pub violations: Vec<String>,
}

/// Tie, swap, punctuation and padding properties on 1,000 generated pairs.
pub fn scorer_properties(model_seed: u64) -> ScorerReport {
    let v = vocab();
    let p = noisy_model(&v, model_seed);
    let mut r = ScorerReport { pairs: 0, flips: 0, violations: Vec::new() };
    for suite in &thousand_pairs() {
        let batched = eval_suite(&p, &v, suite, 300).unwrap();
        let single = eval_suite(&p, &v, suite, 1).unwrap();
        let punct = eval_suite(&p, &v, &with_suffix(suite, " ."), 300).unwrap();
        for (i, pair) in suite.pairs.iter().enumerate() {
            r.pairs += 1;
            let mut fail = |what: &str| r.violations.push(format!("{}: {what}", pair.pair_id));
            let b = &batched.scores[i];
            let s = &single.scores[i];
            if (b.logp_good - s.logp_good).abs() > 1e-5 || (b.logp_bad - s.logp_bad).abs() > 1e-5 {
                fail("padding");
            }
            if punct.scores[i].correct != b.correct {
                fail("punctuation");
            }
            let sw = compare_pair(&p, &v, &pair.swapped()).unwrap();
            if b.logp_good == b.logp_bad {
                if sw.correct || b.correct {
                    fail("tied pair counted as correct");
                }
            } else if sw.correct == b.correct {
                fail("swap");
            } else {
                r.flips += 1;
            }
            let same = MinimalPair { ungrammatical: pair.grammatical.clone(), ..pair.clone() };
            let t = compare_pair(&p, &v, &same).unwrap();
            if t.logp_good != t.logp_bad || t.correct {
                fail("tie");
            }
        }
        if batched.accuracy() != single.accuracy() {
            r.violations.push(format!("{}: batched accuracy", suite.probe_id));
        }
    }
    r
}

/// Largest log-prob difference between native scoring and the same model's
/// exported file read back in, and whether every outcome agrees.
pub fn external_agreement(model_seed: u64) -> (f64, bool) {
    let v = vocab();
    let p = noisy_model(&v, model_seed);
    let (mut worst, mut agree) = (0.0f64, true);
    for suite in thousand_pairs() {
        let native = eval_suite(&p, &v, &suite, 300).unwrap();
        let file = export_logprobs(&p, &v, &suite).unwrap();
        let ext = ingest_external_logprobs(&suite, &file, "mem", DEFAULT_PUNCTUATION).unwrap();
        for (a, b) in native.scores.iter().zip(&ext.scores) {
            worst = worst.max((a.logp_good - b.logp_good).abs()).max((a.logp_bad - b.logp_bad).abs());
            agree &= a.correct == b.correct;
        }
        agree &= native.strata == ext.strata;
    }
    (worst, agree)
}
