//! Forward pass with activation caching and the matching hand-written
//! reverse pass.

use super::scalar::{gemm, Op};
use super::{ModelError, Parameters, Scalar};
use crate::corpus::Batch;
use crate::tokenizer::PAD_ID;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
struct Dims {
    rows: usize,
    seq: usize,
    d: usize,
    heads: usize,
    hd: usize,
    ff: usize,
    vocab: usize,
}

impl Dims {
    fn n(&self) -> usize {
        self.rows * self.seq
    }
}

struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    h1: Vec<T>,
    qkv: Vec<T>,
    /// `rows × heads × seq × seq`, zero where masked
    probs: Vec<T>,
    attn: Vec<T>,
    ln2: LnCache<T>,
    h2: Vec<T>,
    fc_pre: Vec<T>,
    fc_act: Vec<T>,
}

/// Activations of one forward pass over a left-padded batch.
pub struct ForwardPass<T> {
    dims: Dims,
    tokens: Vec<u32>,
    pad: Vec<usize>,
    layers: Vec<LayerCache<T>>,
    lnf: LnCache<T>,
    hf: Vec<T>,
    /// `rows·seq × vocab` log-probabilities. Rows at padded positions carry
    /// no meaning.
    pub logprobs: Vec<T>,
}

impl<T> ForwardPass<T> {
    pub fn vocab(&self) -> usize {
        self.dims.vocab
    }

    pub fn row(&self, b: usize, t: usize) -> &[T] {
        let n = b * self.dims.seq + t;
        &self.logprobs[n * self.dims.vocab..(n + 1) * self.dims.vocab]
    }
}

fn layer_norm<T: Scalar>(x: &[T], gain: &[T], bias: &[T], d: usize, out: &mut [T]) -> LnCache<T> {
    let n = x.len() / d;
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); n];
    let dn = T::of(d as f64);
    let eps = T::of(LN_EPS);
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() / dn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let xh = (row[i] - mean) * rs;
            xhat[r * d + i] = xh;
            out[r * d + i] = xh * gain[i] + bias[i];
        }
    }
    LnCache { xhat, rstd }
}

/// Adds the input gradient into `dx`.
fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    cache: &LnCache<T>,
    gain: &[T],
    d: usize,
    dx: &mut [T],
    dgain: &mut [T],
    dbias: &mut [T],
) {
    let n = dy.len() / d;
    let dn = T::of(d as f64);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..n {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut sum = T::zero();
        let mut sum_xh = T::zero();
        for i in 0..d {
            dgain[i] = dgain[i] + dyr[i] * xh[i];
            dbias[i] = dbias[i] + dyr[i];
            dxhat[i] = dyr[i] * gain[i];
            sum = sum + dxhat[i];
            sum_xh = sum_xh + dxhat[i] * xh[i];
        }
        let scale = cache.rstd[r] / dn;
        for i in 0..d {
            dx[r * d + i] = dx[r * d + i] + scale * (dn * dxhat[i] - sum - xh[i] * sum_xh);
        }
    }
}

fn gelu_consts<T: Scalar>() -> (T, T) {
    (T::of((2.0 / std::f64::consts::PI).sqrt()), T::of(0.044715))
}

fn gelu<T: Scalar>(x: T) -> T {
    let (c, a) = gelu_consts::<T>();
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let (c, a) = gelu_consts::<T>();
    let half = T::of(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * x * x)
}

fn add_bias<T: Scalar>(x: &mut [T], bias: &[T]) {
    for row in x.chunks_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v = *v + b;
        }
    }
}

fn sum_rows_into<T: Scalar>(dy: &[T], width: usize, out: &mut [T]) {
    for row in dy.chunks(width) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
}

fn attention_forward<T: Scalar>(qkv: &[T], dims: &Dims, pad: &[usize], probs: &mut [T], out: &mut [T]) {
    let Dims { seq, d, heads, hd, .. } = *dims;
    let scale = T::one() / T::of(hd as f64).sqrt();
    let stride = 3 * d;
    let mut scores = vec![T::zero(); seq];
    for b in 0..dims.rows {
        for h in 0..heads {
            let pbase = ((b * heads) + h) * seq * seq;
            for i in pad[b]..seq {
                let qi = &qkv[(b * seq + i) * stride + h * hd..][..hd];
                let mut max = T::neg_infinity();
                for j in pad[b]..=i {
                    let kj = &qkv[(b * seq + j) * stride + d + h * hd..][..hd];
                    let s = qi.iter().zip(kj).map(|(&x, &y)| x * y).sum::<T>() * scale;
                    scores[j] = s;
                    max = max.max(s);
                }
                let mut z = T::zero();
                for s in scores[pad[b]..=i].iter_mut() {
                    *s = (*s - max).exp();
                    z = z + *s;
                }
                let o = &mut out[(b * seq + i) * d + h * hd..][..hd];
                o.fill(T::zero());
                for j in pad[b]..=i {
                    let p = scores[j] / z;
                    probs[pbase + i * seq + j] = p;
                    let vj = &qkv[(b * seq + j) * stride + 2 * d + h * hd..][..hd];
                    for (ov, &vv) in o.iter_mut().zip(vj) {
                        *ov = *ov + p * vv;
                    }
                }
            }
        }
    }
}

fn attention_backward<T: Scalar>(
    qkv: &[T],
    probs: &[T],
    dout: &[T],
    dims: &Dims,
    pad: &[usize],
    dqkv: &mut [T],
) {
    let Dims { seq, d, heads, hd, .. } = *dims;
    let scale = T::one() / T::of(hd as f64).sqrt();
    let stride = 3 * d;
    let mut dp = vec![T::zero(); seq];
    for b in 0..dims.rows {
        for h in 0..heads {
            let pbase = ((b * heads) + h) * seq * seq;
            for i in pad[b]..seq {
                let row = b * seq + i;
                let doi = &dout[row * d + h * hd..][..hd];
                let p = &probs[pbase + i * seq..][..seq];
                let mut dot = T::zero();
                for j in pad[b]..=i {
                    let vj = &qkv[(b * seq + j) * stride + 2 * d + h * hd..][..hd];
                    dp[j] = doi.iter().zip(vj).map(|(&x, &y)| x * y).sum();
                    dot = dot + p[j] * dp[j];
                    let dvj = &mut dqkv[(b * seq + j) * stride + 2 * d + h * hd..][..hd];
                    for (g, &x) in dvj.iter_mut().zip(doi) {
                        *g = *g + p[j] * x;
                    }
                }
                for j in pad[b]..=i {
                    let ds = p[j] * (dp[j] - dot) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    let kbase = (b * seq + j) * stride + d + h * hd;
                    let qbase = row * stride + h * hd;
                    for e in 0..hd {
                        let kv = qkv[kbase + e];
                        let qv = qkv[qbase + e];
                        dqkv[qbase + e] = dqkv[qbase + e] + ds * kv;
                        dqkv[kbase + e] = dqkv[kbase + e] + ds * qv;
                    }
                }
            }
        }
    }
}

fn log_softmax_rows<T: Scalar>(x: &mut [T], width: usize) {
    for row in x.chunks_mut(width) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let z = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        for v in row.iter_mut() {
            *v = *v - z;
        }
    }
}

impl<T: Scalar> Parameters<T> {
    fn dims(&self, rows: usize, seq: usize) -> Dims {
        let c = &self.config;
        Dims {
            rows,
            seq,
            d: c.d_model,
            heads: c.n_heads,
            hd: c.d_model / c.n_heads,
            ff: c.d_ff,
            vocab: c.vocab_size,
        }
    }

    /// Runs a batch of `rows` sequences of length `seq`, row `b` having
    /// `pad[b]` left-padding positions. Real tokens get positions
    /// `0, 1, …` counted from the first non-pad token.
    pub fn forward_batch(&self, tokens: &[u32], rows: usize, seq: usize, pad: &[usize]) -> Result<ForwardPass<T>, ModelError> {
        if seq > self.config.context_len {
            return Err(ModelError::SequenceTooLong { len: seq, max: self.config.context_len });
        }
        if tokens.len() != rows * seq || pad.len() != rows {
            return Err(ModelError::BadShape(format!("{} tokens for {rows}×{seq}, {} pad counts", tokens.len(), pad.len())));
        }
        if pad.iter().any(|&p| p > seq) {
            return Err(ModelError::BadPadMask);
        }
        if let Some(&id) = tokens.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(ModelError::TokenOutOfRange { id, vocab: self.config.vocab_size });
        }
        let dims = self.dims(rows, seq);
        let Dims { d, ff, vocab, .. } = dims;
        let n = dims.n();

        let mut x = vec![T::zero(); n * d];
        for b in 0..rows {
            for t in pad[b]..seq {
                let r = b * seq + t;
                let tok = tokens[r] as usize;
                let pos = t - pad[b];
                for i in 0..d {
                    x[r * d + i] = self.tok_embed.data[tok * d + i] + self.pos_embed.data[pos * d + i];
                }
            }
        }

        let mut layers = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let mut h1 = vec![T::zero(); n * d];
            let ln1 = layer_norm(&x, &blk.ln1_gain.data, &blk.ln1_bias.data, d, &mut h1);
            let mut qkv = vec![T::zero(); n * 3 * d];
            gemm(n, d, 3 * d, &h1, Op::N, &blk.w_qkv.data, Op::N, &mut qkv, false);
            add_bias(&mut qkv, &blk.b_qkv.data);
            let mut probs = vec![T::zero(); rows * dims.heads * seq * seq];
            let mut attn = vec![T::zero(); n * d];
            attention_forward(&qkv, &dims, pad, &mut probs, &mut attn);
            let mut proj = vec![T::zero(); n * d];
            gemm(n, d, d, &attn, Op::N, &blk.w_attn_out.data, Op::N, &mut proj, false);
            add_bias(&mut proj, &blk.b_attn_out.data);
            for (xv, &pv) in x.iter_mut().zip(&proj) {
                *xv = *xv + pv;
            }

            let mut h2 = vec![T::zero(); n * d];
            let ln2 = layer_norm(&x, &blk.ln2_gain.data, &blk.ln2_bias.data, d, &mut h2);
            let mut fc_pre = vec![T::zero(); n * ff];
            gemm(n, d, ff, &h2, Op::N, &blk.w_fc.data, Op::N, &mut fc_pre, false);
            add_bias(&mut fc_pre, &blk.b_fc.data);
            let fc_act: Vec<T> = fc_pre.iter().map(|&v| gelu(v)).collect();
            let mut out = vec![T::zero(); n * d];
            gemm(n, ff, d, &fc_act, Op::N, &blk.w_proj.data, Op::N, &mut out, false);
            add_bias(&mut out, &blk.b_proj.data);
            for (xv, &ov) in x.iter_mut().zip(&out) {
                *xv = *xv + ov;
            }
            layers.push(LayerCache { ln1, h1, qkv, probs, attn, ln2, h2, fc_pre, fc_act });
        }

        let mut hf = vec![T::zero(); n * d];
        let lnf = layer_norm(&x, &self.lnf_gain.data, &self.lnf_bias.data, d, &mut hf);
        let mut logprobs = vec![T::zero(); n * vocab];
        gemm(n, d, vocab, &hf, Op::N, &self.w_head.data, Op::N, &mut logprobs, false);
        log_softmax_rows(&mut logprobs, vocab);

        Ok(ForwardPass { dims, tokens: tokens.to_vec(), pad: pad.to_vec(), layers, lnf, hf, logprobs })
    }

    /// Per-position log-probability rows for one sequence. `pad_mask[t]` marks
    /// padding, which must form a prefix (left padding).
    pub fn forward_logprobs(&self, tokens: &[u32], pad_mask: &[bool]) -> Result<Vec<Vec<T>>, ModelError> {
        if pad_mask.len() != tokens.len() {
            return Err(ModelError::BadPadMask);
        }
        let n_pad = pad_mask.iter().take_while(|&&m| m).count();
        if pad_mask[n_pad..].iter().any(|&m| m) {
            return Err(ModelError::BadPadMask);
        }
        let pass = self.forward_batch(tokens, 1, tokens.len(), &[n_pad])?;
        Ok((0..tokens.len()).map(|t| pass.row(0, t).to_vec()).collect())
    }

    /// Gradient of the loss with respect to every parameter, given the
    /// upstream gradient on the logits (`rows·seq × vocab`).
    pub fn backward(&self, pass: &ForwardPass<T>, dlogits: &[T]) -> Parameters<T> {
        let dims = pass.dims;
        let Dims { rows, seq, d, ff, vocab, .. } = dims;
        let n = dims.n();
        let mut g = Parameters::zeros(&self.config);

        gemm(d, n, vocab, &pass.hf, Op::T, dlogits, Op::N, &mut g.w_head.data, true);
        let mut dhf = vec![T::zero(); n * d];
        gemm(n, vocab, d, dlogits, Op::N, &self.w_head.data, Op::T, &mut dhf, false);
        let mut dx = vec![T::zero(); n * d];
        layer_norm_backward(&dhf, &pass.lnf, &self.lnf_gain.data, d, &mut dx, &mut g.lnf_gain.data, &mut g.lnf_bias.data);

        for (l, blk) in self.blocks.iter().enumerate().rev() {
            let cache = &pass.layers[l];
            let gb = &mut g.blocks[l];

            // feed-forward branch; dx flows unchanged through the residual
            gemm(ff, n, d, &cache.fc_act, Op::T, &dx, Op::N, &mut gb.w_proj.data, true);
            sum_rows_into(&dx, d, &mut gb.b_proj.data);
            let mut dact = vec![T::zero(); n * ff];
            gemm(n, d, ff, &dx, Op::N, &blk.w_proj.data, Op::T, &mut dact, false);
            for (g_, &pre) in dact.iter_mut().zip(&cache.fc_pre) {
                *g_ = *g_ * gelu_grad(pre);
            }
            gemm(d, n, ff, &cache.h2, Op::T, &dact, Op::N, &mut gb.w_fc.data, true);
            sum_rows_into(&dact, ff, &mut gb.b_fc.data);
            let mut dh2 = vec![T::zero(); n * d];
            gemm(n, ff, d, &dact, Op::N, &blk.w_fc.data, Op::T, &mut dh2, false);
            layer_norm_backward(&dh2, &cache.ln2, &blk.ln2_gain.data, d, &mut dx, &mut gb.ln2_gain.data, &mut gb.ln2_bias.data);

            // attention branch
            gemm(d, n, d, &cache.attn, Op::T, &dx, Op::N, &mut gb.w_attn_out.data, true);
            sum_rows_into(&dx, d, &mut gb.b_attn_out.data);
            let mut dattn = vec![T::zero(); n * d];
            gemm(n, d, d, &dx, Op::N, &blk.w_attn_out.data, Op::T, &mut dattn, false);
            let mut dqkv = vec![T::zero(); n * 3 * d];
            attention_backward(&cache.qkv, &cache.probs, &dattn, &dims, &pass.pad, &mut dqkv);
            gemm(d, n, 3 * d, &cache.h1, Op::T, &dqkv, Op::N, &mut gb.w_qkv.data, true);
            sum_rows_into(&dqkv, 3 * d, &mut gb.b_qkv.data);
            let mut dh1 = vec![T::zero(); n * d];
            gemm(n, 3 * d, d, &dqkv, Op::N, &blk.w_qkv.data, Op::T, &mut dh1, false);
            layer_norm_backward(&dh1, &cache.ln1, &blk.ln1_gain.data, d, &mut dx, &mut gb.ln1_gain.data, &mut gb.ln1_bias.data);
        }

        for b in 0..rows {
            for t in pass.pad[b]..seq {
                let r = b * seq + t;
                let tok = pass.tokens[r] as usize;
                let pos = t - pass.pad[b];
                for i in 0..d {
                    let v = dx[r * d + i];
                    g.tok_embed.data[tok * d + i] = g.tok_embed.data[tok * d + i] + v;
                    g.pos_embed.data[pos * d + i] = g.pos_embed.data[pos * d + i] + v;
                }
            }
        }
        g
    }

    fn check_batch(&self, batch: &Batch) -> Result<usize, ModelError> {
        if batch.token_ids.len() != batch.rows * batch.context_len || batch.target_ids.len() != batch.token_ids.len() {
            return Err(ModelError::BadShape("batch buffers disagree with rows × context_len".into()));
        }
        if let Some(&id) = batch.target_ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(ModelError::TokenOutOfRange { id, vocab: self.config.vocab_size });
        }
        let count = batch.target_ids.iter().filter(|&&t| t != PAD_ID).count();
        if count == 0 {
            return Err(ModelError::AllPad);
        }
        Ok(count)
    }

    fn nll(pass: &ForwardPass<T>, targets: &[u32], count: usize) -> f64 {
        let v = pass.dims.vocab;
        let total: f64 = targets
            .iter()
            .enumerate()
            .filter(|(_, &t)| t != PAD_ID)
            .map(|(r, &t)| -pass.logprobs[r * v + t as usize].as_f64())
            .sum();
        total / count as f64
    }

    /// Mean next-token negative log-likelihood over non-pad targets.
    pub fn loss(&self, batch: &Batch) -> Result<f64, ModelError> {
        let count = self.check_batch(batch)?;
        let pass = self.forward_batch(&batch.token_ids, batch.rows, batch.context_len, &vec![0; batch.rows])?;
        Ok(Self::nll(&pass, &batch.target_ids, count))
    }

    pub fn loss_and_grads(&self, batch: &Batch) -> Result<(f64, Parameters<T>), ModelError> {
        let count = self.check_batch(batch)?;
        let pass = self.forward_batch(&batch.token_ids, batch.rows, batch.context_len, &vec![0; batch.rows])?;
        let loss = Self::nll(&pass, &batch.target_ids, count);
        let v = pass.dims.vocab;
        let inv = T::of(1.0 / count as f64);
        let mut dlogits = vec![T::zero(); pass.logprobs.len()];
        for (r, &t) in batch.target_ids.iter().enumerate() {
            if t == PAD_ID {
                continue;
            }
            let lp = &pass.logprobs[r * v..(r + 1) * v];
            let dl = &mut dlogits[r * v..(r + 1) * v];
            for (g, &l) in dl.iter_mut().zip(lp) {
                *g = l.exp() * inv;
            }
            dl[t as usize] = dl[t as usize] - inv;
        }
        Ok((loss, self.backward(&pass, &dlogits)))
    }
}
