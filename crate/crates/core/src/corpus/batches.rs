use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::CorpusError;
use crate::tokenizer::{Vocabulary, PAD_ID};

/// `rows × context_len` inputs and next-token targets, row-major.
/// A target equal to the pad id is ignored by the loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub rows: usize,
    pub context_len: usize,
    pub token_ids: Vec<u32>,
    pub target_ids: Vec<u32>,
}

impl Batch {
    pub fn row(&self, i: usize) -> (&[u32], &[u32]) {
        let r = i * self.context_len..(i + 1) * self.context_len;
        (&self.token_ids[r.clone()], &self.target_ids[r])
    }
}

/// Encodes each non-empty line and terminates it with the separator token.
pub fn token_stream(text: &str, vocab: &Vocabulary) -> Vec<u32> {
    let sep = vocab.separator_id();
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        out.extend(vocab.encode(line));
        out.push(sep);
    }
    out
}

/// The concatenated token stream cut into `context_len` chunks; epochs visit
/// every chunk once in a seed-determined order.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    stream: Vec<u32>,
    context_len: usize,
    batch_size: usize,
    n_chunks: usize,
    seed: u64,
}

pub fn make_batches(
    text: &str,
    vocab: &Vocabulary,
    context_len: usize,
    batch_size: usize,
    seed: u64,
) -> Result<BatchPlan, CorpusError> {
    BatchPlan::from_tokens(token_stream(text, vocab), context_len, batch_size, seed)
}

impl BatchPlan {
    pub fn from_tokens(stream: Vec<u32>, context_len: usize, batch_size: usize, seed: u64) -> Result<Self, CorpusError> {
        if context_len < 2 {
            return Err(CorpusError::ContextTooSmall(context_len));
        }
        if batch_size == 0 {
            return Err(CorpusError::ZeroBatch);
        }
        let n_chunks = stream.len() / context_len;
        if n_chunks == 0 {
            return Err(CorpusError::CorpusTooShort { tokens: stream.len(), context_len });
        }
        Ok(BatchPlan { stream, context_len, batch_size, n_chunks, seed })
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn n_chunks(&self) -> usize {
        self.n_chunks
    }

    pub fn n_tokens(&self) -> usize {
        self.stream.len()
    }

    /// Tokens after the last full chunk, never shown to the model.
    pub fn dropped_tokens(&self) -> usize {
        self.stream.len() - self.n_chunks * self.context_len
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n_chunks.div_ceil(self.batch_size)
    }

    /// Chunk visiting order of one epoch.
    pub fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch);
        let mut order: Vec<usize> = (0..self.n_chunks).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Batch `index` of an epoch whose order came from [`Self::epoch_order`].
    pub fn batch(&self, order: &[usize], index: usize) -> Batch {
        let start = index * self.batch_size;
        let chunks = &order[start..(start + self.batch_size).min(order.len())];
        let c = self.context_len;
        let mut token_ids = Vec::with_capacity(chunks.len() * c);
        let mut target_ids = Vec::with_capacity(chunks.len() * c);
        for &k in chunks {
            let s = k * c;
            token_ids.extend_from_slice(&self.stream[s..s + c]);
            target_ids.extend((s + 1..s + c + 1).map(|j| self.stream.get(j).copied().unwrap_or(PAD_ID)));
        }
        Batch { rows: chunks.len(), context_len: c, token_ids, target_ids }
    }

    pub fn epoch(&self, epoch: u64) -> impl Iterator<Item = Batch> + '_ {
        let order = self.epoch_order(epoch);
        (0..self.batches_per_epoch()).map(move |i| self.batch(&order, i))
    }
}
