use proptest::prelude::*;

use trajlab::corpus::{generate_corpus, GrammarSpec};
use trajlab::tokenizer::{train_bpe, Vocabulary, DEFAULT_PUNCTUATION, PAD_ID, UNK_ID};

fn is_punct_text(s: &str) -> bool {
    let t = s.trim();
    !t.is_empty() && t.chars().all(|c| DEFAULT_PUNCTUATION.contains(c))
}

#[test]
fn thousand_generated_sentences_round_trip() {
    let g = GrammarSpec::default();
    let v = train_bpe(&generate_corpus(&g, 2000).unwrap(), 120, DEFAULT_PUNCTUATION).unwrap();
    let fresh = generate_corpus(&GrammarSpec { seed: 77, ..g }, 1000).unwrap();
    let mut n = 0;
    for line in fresh.lines() {
        let ids = v.encode(line);
        assert!(!ids.contains(&PAD_ID) && !ids.contains(&UNK_ID), "{line}");
        assert_eq!(v.decode(&ids).unwrap(), line);
        n += 1;
    }
    assert_eq!(n, 1000);
}

#[test]
fn vocabulary_reaches_target_or_exhausts_merges() {
    let text = generate_corpus(&GrammarSpec::default(), 500).unwrap();
    let small = train_bpe(&text, 60, DEFAULT_PUNCTUATION).unwrap();
    assert_eq!(small.size(), 60);
    let big = train_bpe(&text, 5000, DEFAULT_PUNCTUATION).unwrap();
    assert!(big.size() < 5000);
    // Exhausted: every word of the corpus is a single token.
    for line in text.lines().take(50) {
        assert_eq!(big.encode(line).len(), line.split(' ').count(), "{line}");
    }
    let bigger = train_bpe(&text, 6000, DEFAULT_PUNCTUATION).unwrap();
    assert_eq!(big.to_text(), bigger.to_text().replacen(&format!("v1 {}", bigger.size()), &format!("v1 {}", big.size()), 1));
}

#[test]
fn identical_inputs_give_identical_files() {
    let text = generate_corpus(&GrammarSpec::default(), 800).unwrap();
    let a = train_bpe(&text, 90, DEFAULT_PUNCTUATION).unwrap().to_text();
    let b = train_bpe(&text, 90, DEFAULT_PUNCTUATION).unwrap().to_text();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vocab.txt");
    std::fs::write(&path, &a).unwrap();
    assert_eq!(Vocabulary::load(&path).unwrap().to_text(), a);
}

fn text_strategy() -> impl Strategy<Value = String> {
    // Small alphabet so merges happen; includes punctuation and spaces.
    prop::collection::vec(prop::sample::select(vec!['a', 'b', 'c', ' ', ' ', '.', ',', '?', '\n', 'é']), 1..120)
        .prop_map(|c| c.into_iter().collect::<String>())
        .prop_filter("needs a non-separator byte", |s| s.chars().any(|c| c != '\n'))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn registry_round_trip_and_leading_space(text in text_strategy(), target in 10usize..80) {
        let v = match train_bpe(&text, target, DEFAULT_PUNCTUATION) {
            Ok(v) => v,
            Err(_) => return Ok(()),
        };
        for id in 0..v.size() as u32 {
            let bytes = v.token_bytes(id);
            prop_assert_eq!(v.is_punctuation(id), id > UNK_ID && is_punct_text(&String::from_utf8_lossy(bytes)));
            // Whitespace only ever leads a token.
            let first_non_space = bytes.iter().position(|b| !b.is_ascii_whitespace()).unwrap_or(bytes.len());
            prop_assert!(bytes[first_non_space..].iter().all(|b| !b.is_ascii_whitespace()) || bytes.len() == 1, "{:?}", bytes);
        }
        for line in text.lines() {
            prop_assert_eq!(v.decode(&v.encode(line)).unwrap(), line);
        }
        let reloaded = Vocabulary::from_text(&v.to_text()).unwrap();
        prop_assert_eq!(&reloaded, &v);
    }

    /// A word's tokens do not depend on what follows it, so appending
    /// punctuation keeps the earlier ids.
    #[test]
    fn appending_punctuation_keeps_the_prefix(seed in 0u64..1000, n in 1usize..4) {
        let g = GrammarSpec { seed, ..GrammarSpec::default() };
        let v = train_bpe(&generate_corpus(&g, 300).unwrap(), 70, DEFAULT_PUNCTUATION).unwrap();
        for line in generate_corpus(&g, n).unwrap().lines() {
            let stem = line.trim_end_matches([' ', '.', '?']);
            let base = v.encode(stem);
            let full = v.encode(&format!("{stem} ."));
            prop_assert_eq!(&full[..base.len()], &base[..]);
            prop_assert!(full[base.len()..].iter().all(|&id| v.is_punctuation(id)));
        }
    }
}

#[test]
fn out_of_set_bytes_map_to_unknown() {
    let v = train_bpe("the dog runs .", 20, DEFAULT_PUNCTUATION).unwrap();
    assert_eq!(v.encode("Z"), vec![UNK_ID]);
    assert_eq!(v.encode("é").len(), 2);
    assert!(v.encode("é").iter().all(|&i| i == UNK_ID));
    assert!(v.decode(&[v.size() as u32]).is_err());
}
