//! Byte-exact fixtures. Set `UPDATE_GOLDEN=1` to rewrite them after an
//! intentional format change.

mod common;

use common::fixtures::*;

fn check(name: &str, produce: fn() -> Vec<u8>) {
    if let Err(e) = compare(name, &produce()) {
        panic!("{e}");
    }
}

#[test]
fn vocabulary_file() {
    check("vocab.txt", vocab_file);
}

#[test]
fn grammar() {
    check("grammar.toml", grammar_file);
}

#[test]
fn probe_suite_jsonl() {
    check("nounpp.jsonl", suite_file);
}

#[test]
fn initial_checkpoint_bytes() {
    check("checkpoint_init.sha256", checkpoint_digest);
}

#[test]
fn eval_csv() {
    check("eval.csv", eval_table);
}

#[test]
fn exported_logprobs() {
    check("logprobs.jsonl", logprob_file);
}

#[test]
fn analysis() {
    check("analysis.json", analysis_json);
}

#[test]
fn stage_matrix_figure() {
    check("stages.svg", stage_figure);
}

#[test]
fn every_fixture_has_a_producer() {
    let mut on_disk: Vec<String> = std::fs::read_dir(golden_path(""))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    on_disk.sort();
    let mut known: Vec<String> = ALL.iter().map(|(n, _)| n.to_string()).collect();
    known.sort();
    assert_eq!(on_disk, known);
}
