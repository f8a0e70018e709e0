use std::collections::BTreeMap;
use std::path::Path;
use std::time::SystemTime;

use trajlab::config::RunConfig;
use trajlab::pipeline::{run_pipeline, seed_dir, PipelineError, Stage, StageOutcome, ANALYSIS_FILE, EVAL_FILE};

const TINY: &str = r#"
base_seed = 5
n_seeds = 2

[data]
n_sentences = 600

[tokenizer]
vocab_size = 70

[model]
n_layers = 1
n_heads = 2
d_model = 8
d_ff = 16
context_len = 32

[train]
lr = 3e-3
batch_size = 4
max_steps = 30
checkpoint_every = 10

[probes]
n_pairs = 12

[analysis]
n_perm = 40
"#;

fn config(out: &Path) -> RunConfig {
    let mut c = RunConfig::from_toml_str(TINY, "tiny").unwrap();
    c.out_dir = out.to_path_buf();
    c
}

/// Relative path to contents for every file under `dir`.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn mtimes(dir: &Path) -> BTreeMap<String, SystemTime> {
    snapshot(dir).into_keys().map(|k| (k.clone(), std::fs::metadata(dir.join(&k)).unwrap().modified().unwrap())).collect()
}

#[test]
fn staged_run_equals_full_run_and_rerun_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    let staged = tmp.path().join("staged");

    let report = run_pipeline(&config(&full), &Stage::ALL, Some(1)).unwrap();
    assert!(report.stages.iter().all(|(_, o)| *o == StageOutcome::Ran));
    for stage in Stage::ALL {
        run_pipeline(&config(&staged), &[stage], Some(1)).unwrap();
    }
    let a = snapshot(&full);
    let b = snapshot(&staged);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(bytes == &b[name], "{name} differs between a staged and a full run");
    }
    for must in [EVAL_FILE, ANALYSIS_FILE, "manifest.json", "report/summary.txt"] {
        assert!(a.contains_key(must), "{must} missing");
    }
    assert_eq!(a.keys().filter(|k| k.ends_with(".trjl")).count(), 2 * 4);

    let before = mtimes(&full);
    let again = run_pipeline(&config(&full), &Stage::ALL, Some(1)).unwrap();
    assert!(again.stages.iter().all(|(_, o)| *o == StageOutcome::UpToDate), "{:?}", again.stages);
    assert_eq!(before, mtimes(&full));
    assert_eq!(a, snapshot(&full));
}

#[test]
fn missing_prerequisite_names_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let err = run_pipeline(&config(tmp.path()), &[Stage::Eval], Some(1)).unwrap_err();
    assert!(matches!(err, PipelineError::MissingPrerequisite { stage: Stage::Eval, .. }), "{err}");
    let err = run_pipeline(&config(tmp.path()), &[Stage::Train], Some(1)).unwrap_err();
    assert!(matches!(err, PipelineError::MissingPrerequisite { needs: Stage::Data, .. }), "{err}");
    assert!(err.to_string().contains("run that stage first"));
}

#[test]
fn changed_model_settings_refuse_old_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = config(tmp.path());
    c.train.max_steps = 10;
    run_pipeline(&c, &[Stage::Data, Stage::Train], Some(1)).unwrap();
    assert!(seed_dir(tmp.path(), 5).is_dir());
    c.model.d_ff = 32;
    let err = run_pipeline(&c, &[Stage::Train], Some(1)).unwrap_err();
    assert!(matches!(err, PipelineError::ConfigMismatch { .. }), "{err}");
}
