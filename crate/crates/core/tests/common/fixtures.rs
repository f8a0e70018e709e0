//! Producers for the byte-exact fixtures under `tests/golden`.

use std::path::PathBuf;

use sha2::{Digest, Sha256};

use trajlab::childcmp::{learned_matrix, StageMap};
use trajlab::corpus::{generate_corpus, GrammarSpec};
use trajlab::model::{Adam, CheckpointRecord, DataCursor, ModelConfig, Parameters};
use trajlab::probes::{eval_suite, export_logprobs, generate_suite, EvalRow, Phenomenon, ProbeSuite};
use trajlab::report::plot_stage_matrix;
use trajlab::tokenizer::{train_bpe, Vocabulary, DEFAULT_PUNCTUATION};
use trajlab::trajectory::{analyze, AnalysisSettings, EvalMatrix};

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against the stored fixture, or rewrites it when
/// `UPDATE_GOLDEN` is set.
pub fn compare(name: &str, actual: &[u8]) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let first = expected.iter().zip(actual).position(|(a, b)| a != b).unwrap_or(expected.len().min(actual.len()));
    Err(format!("{name} differs from the fixture at byte {first} ({} vs {} bytes)", actual.len(), expected.len()))
}

fn vocab() -> Vocabulary {
    let text = generate_corpus(&GrammarSpec::default(), 300).unwrap();
    train_bpe(&text, 64, DEFAULT_PUNCTUATION).unwrap()
}

fn suite() -> ProbeSuite {
    generate_suite(&GrammarSpec::default(), Phenomenon::NounPp, 16, 5).unwrap()
}

fn tiny_model(vocab_size: usize) -> Parameters<f32> {
    Parameters::init(&ModelConfig { n_layers: 1, n_heads: 2, d_model: 8, d_ff: 16, context_len: 32, vocab_size, seed: 3 })
}

pub fn vocab_file() -> Vec<u8> {
    vocab().to_text().into_bytes()
}

pub fn grammar_file() -> Vec<u8> {
    GrammarSpec::default().to_toml_string().into_bytes()
}

pub fn suite_file() -> Vec<u8> {
    suite().to_jsonl().into_bytes()
}

/// The binary is large, so the fixture holds its digest and size.
pub fn checkpoint_digest() -> Vec<u8> {
    let params = tiny_model(vocab().size());
    let record = CheckpointRecord {
        config: params.config.clone(),
        step: 0,
        adam: Adam::new(&params),
        params,
        cursor: DataCursor { seed: 11, epoch: 0, position: 0 },
    };
    let bytes = record.to_bytes();
    assert_eq!(CheckpointRecord::<f32>::from_bytes(&bytes).unwrap(), record);
    format!("{} {}\n", hex::encode(Sha256::digest(&bytes)), bytes.len()).into_bytes()
}

pub fn eval_table() -> Vec<u8> {
    let v = vocab();
    let eval = eval_suite(&tiny_model(v.size()), &v, &suite(), 7).unwrap();
    EvalRow::to_csv(&EvalRow::from_eval(0, 0, &eval)).into_bytes()
}

pub fn logprob_file() -> Vec<u8> {
    let v = vocab();
    let mut s = suite();
    s.pairs.truncate(3);
    export_logprobs(&tiny_model(v.size()), &v, &s).unwrap().into_bytes()
}

/// Three seeds, six probes; probe p rises at checkpoint p + seed and the
/// last one never does.
pub fn analysis_json() -> Vec<u8> {
    let names: Vec<String> = (0..6).map(|i| format!("p{i}")).collect();
    let (seeds, steps) = (3usize, 12usize);
    let mut acc = Vec::new();
    for s in 0..seeds {
        for t in 0..steps {
            for p in 0..names.len() {
                let up = p < 5 && t >= p + s;
                acc.push(if up { 0.9 } else { 0.5 - 0.01 * p as f64 });
            }
        }
    }
    let m = EvalMatrix::new((0..seeds as u64).collect(), (0..steps as u64).map(|t| 10 * t).collect(), names, acc).unwrap();
    let a = analyze(&m, &AnalysisSettings { n_perm: 50, ..AnalysisSettings::default() }).unwrap();
    a.to_json().into_bytes()
}

pub fn stage_figure() -> Vec<u8> {
    let probes = ["simple-SV", "wh-question", "short-nested-outer"].map(String::from).to_vec();
    #[rustfmt::skip]
    let acc = vec![
        0.50, 0.48, 0.50,
        0.70, 0.52, 0.40,
        0.90, 0.80, 0.60,
    ];
    let m = EvalMatrix::new(vec![0], vec![0, 100, 200], probes, acc).unwrap();
    let grid = learned_matrix(&m, &StageMap::default(), &[0, 100, 200]).unwrap();
    plot_stage_matrix(&grid).into_bytes()
}

pub type Producer = fn() -> Vec<u8>;

pub const ALL: [(&str, Producer); 8] = [
    ("vocab.txt", vocab_file),
    ("grammar.toml", grammar_file),
    ("nounpp.jsonl", suite_file),
    ("checkpoint_init.sha256", checkpoint_digest),
    ("eval.csv", eval_table),
    ("logprobs.jsonl", logprob_file),
    ("analysis.json", analysis_json),
    ("stages.svg", stage_figure),
];
