//! Training data: synthetic agreement corpora and fixed-length batches.

mod batches;
mod grammar;

pub use batches::{make_batches, token_stream, Batch, BatchPlan};
pub use grammar::{generate_corpus, Draw, GrammarSpec, Number, SentenceStream, Slot, Template, AUXILIARY, COMPLEMENTIZER};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("lexicon list `{0}` is empty")]
    EmptyLexicon(&'static str),
    #[error("singular and plural forms must be distinct and non-empty: {0:?} / {1:?}")]
    BadForms(String, String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template weights must be finite, non-negative, with at least one positive")]
    BadWeights,
    #[error("number of sentences must be positive")]
    NoSentences,
    #[error("context length must be at least 2, got {0}")]
    ContextTooSmall(usize),
    #[error("batch size must be positive")]
    ZeroBatch,
    #[error("corpus has {tokens} tokens, fewer than one context window of {context_len}")]
    CorpusTooShort { tokens: usize, context_len: usize },
    #[error("grammar config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
