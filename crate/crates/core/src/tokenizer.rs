//! Byte-level BPE tokenizer.
//!
//! Ids are laid out as `0 = <pad>`, `1 = <unk>`, then the sorted byte
//! alphabet seen in the training corpus, then one id per new merged token.
//! Bytes fall into three classes: punctuation, whitespace and word bytes.
//! Merges never produce a token holding both punctuation and word bytes, so a
//! token is punctuation exactly when its trimmed text is non-empty and made
//! of punctuation characters (`" ."` is, `"s."` cannot exist). Whitespace
//! only ever leads a token (`" runs"`, never `"runs "`), so a word tokenizes
//! the same whatever follows it. The scorer relies on this registry to drop
//! punctuation targets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Characters treated as punctuation unless the vocabulary file says otherwise.
pub const DEFAULT_PUNCTUATION: &str = ".,;:!?\"'()-";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
/// Separator byte between documents; always part of the alphabet.
pub const DOC_SEPARATOR: u8 = b'\n';

const HEADER: &str = "bpevocab v1";

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("target vocabulary size {target} is below the minimum {minimum} (alphabet + pad + unk)")]
    TargetTooSmall { target: usize, minimum: usize },
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("punctuation set must be non-empty ASCII, got {0:?}")]
    BadPunctuationSet(String),
    #[error("vocabulary file line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Key of the token bijection. Special tokens have no surface bytes, so they
/// cannot collide with any text token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenKey {
    Pad,
    Unk,
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    alphabet: Vec<u8>,
    punct_bytes: Vec<u8>,
    merges: Vec<(u32, u32)>,
    tokens: Vec<TokenKey>,
    token_to_id: HashMap<TokenKey, u32>,
    merge_result: HashMap<(u32, u32), (u32, u32)>,
    byte_to_id: [Option<u32>; 256],
    punctuation_ids: BTreeSet<u32>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.alphabet == other.alphabet
            && self.punct_bytes == other.punct_bytes
            && self.merges == other.merges
            && self.tokens == other.tokens
    }
}

fn check_punctuation(punctuation: &str) -> Result<Vec<u8>, TokenizerError> {
    if punctuation.is_empty() || !punctuation.is_ascii() {
        return Err(TokenizerError::BadPunctuationSet(punctuation.to_string()));
    }
    let set: BTreeSet<u8> = punctuation.bytes().collect();
    Ok(set.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Space,
    Punct,
    Word,
}

impl Vocabulary {
    fn with_alphabet(alphabet: Vec<u8>, punct_bytes: Vec<u8>) -> Self {
        let mut v = Vocabulary {
            alphabet: Vec::new(),
            punct_bytes,
            merges: Vec::new(),
            tokens: vec![TokenKey::Pad, TokenKey::Unk],
            token_to_id: HashMap::new(),
            merge_result: HashMap::new(),
            byte_to_id: [None; 256],
            punctuation_ids: BTreeSet::new(),
        };
        v.token_to_id.insert(TokenKey::Pad, PAD_ID);
        v.token_to_id.insert(TokenKey::Unk, UNK_ID);
        for &b in &alphabet {
            let id = v.push_token(vec![b]);
            v.byte_to_id[b as usize] = Some(id);
        }
        v.alphabet = alphabet;
        v
    }

    /// Adds a token unless its bytes already exist; returns its id.
    fn push_token(&mut self, bytes: Vec<u8>) -> u32 {
        let key = TokenKey::Bytes(bytes);
        if let Some(&id) = self.token_to_id.get(&key) {
            return id;
        }
        let id = self.tokens.len() as u32;
        if let TokenKey::Bytes(b) = &key {
            if self.class_of(b) == Class::Punct {
                self.punctuation_ids.insert(id);
            }
        }
        self.token_to_id.insert(key.clone(), id);
        self.tokens.push(key);
        id
    }

    fn push_merge(&mut self, left: u32, right: u32) -> u32 {
        let mut bytes = self.token_bytes(left).to_vec();
        bytes.extend_from_slice(self.token_bytes(right));
        let id = self.push_token(bytes);
        let rank = self.merges.len() as u32;
        self.merges.push((left, right));
        self.merge_result.insert((left, right), (rank, id));
        id
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn pad_id(&self) -> u32 {
        PAD_ID
    }

    pub fn unk_id(&self) -> u32 {
        UNK_ID
    }

    /// Id of the document separator token.
    pub fn separator_id(&self) -> u32 {
        self.byte_to_id[DOC_SEPARATOR as usize].expect("separator byte is always in the alphabet")
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn punctuation_ids(&self) -> &BTreeSet<u32> {
        &self.punctuation_ids
    }

    pub fn is_punctuation(&self, id: u32) -> bool {
        self.punctuation_ids.contains(&id)
    }

    pub fn punctuation_chars(&self) -> String {
        self.punct_bytes.iter().map(|&b| b as char).collect()
    }

    pub fn id_of(&self, key: &TokenKey) -> Option<u32> {
        self.token_to_id.get(key).copied()
    }

    pub fn token(&self, id: u32) -> Option<&TokenKey> {
        self.tokens.get(id as usize)
    }

    /// Surface bytes of a token; empty for the special tokens.
    pub fn token_bytes(&self, id: u32) -> &[u8] {
        match &self.tokens[id as usize] {
            TokenKey::Bytes(b) => b,
            _ => &[],
        }
    }

    /// Surface text of a token as used in exchange files.
    pub fn token_text(&self, id: u32) -> String {
        match &self.tokens[id as usize] {
            TokenKey::Pad => String::new(),
            TokenKey::Unk => "\u{FFFD}".to_string(),
            TokenKey::Bytes(b) => String::from_utf8_lossy(b).into_owned(),
        }
    }

    fn class_of(&self, bytes: &[u8]) -> Class {
        let mut class = Class::Space;
        for b in bytes {
            if self.punct_bytes.contains(b) {
                class = Class::Punct;
            } else if !b.is_ascii_whitespace() {
                return Class::Word;
            }
        }
        class
    }

    fn mergeable(&self, a: u32, b: u32) -> bool {
        if a <= UNK_ID || b <= UNK_ID {
            return false;
        }
        let right = self.token_bytes(b);
        // Whitespace may only lead a token, so words never absorb the gap after them.
        if right.iter().any(|c| c.is_ascii_whitespace()) {
            return false;
        }
        let (ca, cb) = (self.class_of(self.token_bytes(a)), self.class_of(right));
        !matches!((ca, cb), (Class::Word, Class::Punct) | (Class::Punct, Class::Word))
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids: Vec<u32> = text
            .bytes()
            .map(|b| self.byte_to_id[b as usize].unwrap_or(UNK_ID))
            .collect();
        loop {
            let best = ids
                .windows(2)
                .filter_map(|w| self.merge_result.get(&(w[0], w[1])).map(|&(rank, _)| (rank, w[0], w[1])))
                .min();
            let Some((_, left, right)) = best else { break };
            let new_id = self.merge_result[&(left, right)].1;
            ids = merge_pair(&ids, left, right, new_id);
        }
        ids
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut bytes = Vec::new();
        for &id in ids {
            match self.tokens.get(id as usize) {
                None => return Err(TokenizerError::IdOutOfRange { id, size: self.size() }),
                Some(TokenKey::Pad) => {}
                Some(TokenKey::Unk) => bytes.extend_from_slice("\u{FFFD}".as_bytes()),
                Some(TokenKey::Bytes(b)) => bytes.extend_from_slice(b),
            }
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    /// Serializes to the versioned text format.
    pub fn to_text(&self) -> String {
        let hex_list = |bytes: &[u8]| bytes.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER} {}", self.size());
        let _ = writeln!(out, "alphabet {}", hex_list(&self.alphabet));
        let _ = writeln!(out, "punctset {}", hex_list(&self.punct_bytes));
        for &(l, r) in &self.merges {
            let _ = writeln!(out, "{} {}", hex::encode(self.token_bytes(l)), hex::encode(self.token_bytes(r)));
        }
        let ids: Vec<String> = self.punctuation_ids.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{}", ids.join(","));
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TokenizerError> {
        let err = |line: usize, msg: &str| TokenizerError::Format { line, msg: msg.to_string() };
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < 4 {
            return Err(err(lines.len() + 1, "file truncated"));
        }
        let size: usize = lines[0]
            .strip_prefix(HEADER)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| err(1, "expected header `bpevocab v1 <size>`"))?;
        let parse_bytes = |line: usize, s: &str, key: &str| -> Result<Vec<u8>, TokenizerError> {
            let rest = s.strip_prefix(key).ok_or_else(|| err(line, &format!("expected `{key}` line")))?;
            rest.split_whitespace()
                .map(|h| u8::from_str_radix(h, 16).map_err(|_| err(line, "bad hex byte")))
                .collect()
        };
        let alphabet = parse_bytes(2, lines[1], "alphabet")?;
        let punct = parse_bytes(3, lines[2], "punctset")?;
        if punct.is_empty() || !punct.is_ascii() {
            return Err(err(3, "punctuation set must be non-empty ASCII"));
        }
        if !alphabet.windows(2).all(|w| w[0] < w[1]) || !alphabet.contains(&DOC_SEPARATOR) {
            return Err(err(2, "alphabet must be strictly increasing and contain the separator"));
        }
        let mut vocab = Vocabulary::with_alphabet(alphabet, punct);
        let last = lines.len() - 1;
        for (i, line) in lines[3..last].iter().enumerate() {
            let lineno = i + 4;
            let mut parts = line.split(' ');
            let (Some(l), Some(r), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(lineno, "merge rule must be two hex tokens"));
            };
            let decode_tok = |h: &str| -> Result<u32, TokenizerError> {
                let bytes = hex::decode(h).map_err(|_| err(lineno, "bad hex token"))?;
                vocab.id_of(&TokenKey::Bytes(bytes)).ok_or_else(|| err(lineno, "merge refers to unknown token"))
            };
            let (l, r) = (decode_tok(l)?, decode_tok(r)?);
            if !vocab.mergeable(l, r) {
                return Err(err(lineno, "merge crosses the punctuation boundary"));
            }
            vocab.push_merge(l, r);
        }
        let listed: Result<BTreeSet<u32>, _> = if lines[last].trim().is_empty() {
            Ok(BTreeSet::new())
        } else {
            lines[last].split(',').map(|s| s.trim().parse::<u32>()).collect()
        };
        let listed = listed.map_err(|_| err(last + 1, "bad punctuation id list"))?;
        if listed != vocab.punctuation_ids {
            return Err(err(last + 1, "punctuation ids disagree with the punctuation set"));
        }
        if vocab.size() != size {
            return Err(err(1, &format!("header declares {size} tokens, merges produce {}", vocab.size())));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn merge_pair(ids: &[u32], left: u32, right: u32, new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(ids.len());
    let mut i = 0;
    while i < ids.len() {
        if i + 1 < ids.len() && ids[i] == left && ids[i + 1] == right {
            out.push(new_id);
            i += 2;
        } else {
            out.push(ids[i]);
            i += 1;
        }
    }
    out
}

/// Learns merges on `corpus` (one document per line) until the vocabulary
/// holds `target_size` tokens or no mergeable pair is left.
pub fn train_bpe(corpus: &str, target_size: usize, punctuation: &str) -> Result<Vocabulary, TokenizerError> {
    let punct_bytes = check_punctuation(punctuation)?;
    let mut docs: BTreeMap<&str, u64> = BTreeMap::new();
    for line in corpus.lines().filter(|l| !l.is_empty()) {
        *docs.entry(line).or_default() += 1;
    }
    if docs.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let mut alphabet: BTreeSet<u8> = docs.keys().flat_map(|d| d.bytes()).collect();
    alphabet.insert(DOC_SEPARATOR);
    let minimum = alphabet.len() + 2;
    if target_size < minimum {
        return Err(TokenizerError::TargetTooSmall { target: target_size, minimum });
    }
    let mut vocab = Vocabulary::with_alphabet(alphabet.into_iter().collect(), punct_bytes);

    let mut seqs: Vec<(Vec<u32>, u64)> = docs
        .iter()
        .map(|(d, &n)| (d.bytes().map(|b| vocab.byte_to_id[b as usize].unwrap()).collect(), n))
        .collect();

    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    for (seq, n) in &seqs {
        add_pairs(&vocab, seq, *n as i64, &mut counts);
    }

    while vocab.size() < target_size {
        let best = counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .max_by(|(pa, ca), (pb, cb)| {
                ca.cmp(cb).then_with(|| {
                    // smaller pair wins a tie, so it must compare as "greater"
                    let ka = (vocab.token_bytes(pa.0), vocab.token_bytes(pa.1));
                    let kb = (vocab.token_bytes(pb.0), vocab.token_bytes(pb.1));
                    kb.cmp(&ka)
                })
            })
            .map(|(&p, _)| p);
        let Some((left, right)) = best else { break };
        let new_id = vocab.push_merge(left, right);
        for (seq, n) in seqs.iter_mut() {
            if !seq.windows(2).any(|w| w[0] == left && w[1] == right) {
                continue;
            }
            add_pairs(&vocab, seq, -(*n as i64), &mut counts);
            *seq = merge_pair(seq, left, right, new_id);
            add_pairs(&vocab, seq, *n as i64, &mut counts);
        }
        counts.retain(|_, c| *c > 0);
    }
    Ok(vocab)
}

fn add_pairs(vocab: &Vocabulary, seq: &[u32], delta: i64, counts: &mut HashMap<(u32, u32), u64>) {
    for w in seq.windows(2) {
        if vocab.mergeable(w[0], w[1]) {
            let c = counts.entry((w[0], w[1])).or_default();
            *c = (*c as i64 + delta) as u64;
        }
    }
}
