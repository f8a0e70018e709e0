use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Weights of one pre-layer-norm transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub ln1_gain: Tensor<T>,
    pub ln1_bias: Tensor<T>,
    /// `d_model × 3·d_model`, columns `[q | k | v]`
    pub w_qkv: Tensor<T>,
    pub b_qkv: Tensor<T>,
    pub w_attn_out: Tensor<T>,
    pub b_attn_out: Tensor<T>,
    pub ln2_gain: Tensor<T>,
    pub ln2_bias: Tensor<T>,
    pub w_fc: Tensor<T>,
    pub b_fc: Tensor<T>,
    pub w_proj: Tensor<T>,
    pub b_proj: Tensor<T>,
}

/// All trainable tensors. [`Parameters::tensors`] defines the canonical
/// order used by checkpoints and the optimizer:
///
/// `tok_embed, pos_embed, { ln1_gain, ln1_bias, w_qkv, b_qkv, w_attn_out,
/// b_attn_out, ln2_gain, ln2_bias, w_fc, b_fc, w_proj, b_proj } × n_layers,
/// lnf_gain, lnf_bias, w_head`
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    pub config: ModelConfig,
    pub tok_embed: Tensor<T>,
    pub pos_embed: Tensor<T>,
    pub blocks: Vec<Block<T>>,
    pub lnf_gain: Tensor<T>,
    pub lnf_bias: Tensor<T>,
    /// `d_model × vocab`, untied from the token embedding
    pub w_head: Tensor<T>,
}

const INIT_STD: f64 = 0.02;
const POS_INIT_STD: f64 = 0.01;

impl<T: Scalar> Parameters<T> {
    /// Canonical tensor shapes for a config.
    pub fn shapes(config: &ModelConfig) -> Vec<Vec<usize>> {
        let (d, f, v, c) = (config.d_model, config.d_ff, config.vocab_size, config.context_len);
        let mut out = vec![vec![v, d], vec![c, d]];
        for _ in 0..config.n_layers {
            out.extend([
                vec![d],
                vec![d],
                vec![d, 3 * d],
                vec![3 * d],
                vec![d, d],
                vec![d],
                vec![d],
                vec![d],
                vec![d, f],
                vec![f],
                vec![f, d],
                vec![d],
            ]);
        }
        out.extend([vec![d], vec![d], vec![d, v]]);
        out
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        Self::from_tensors(config, Self::shapes(config).iter().map(|s| Tensor::zeros(s)).collect())
    }

    /// Rebuilds from tensors in canonical order. Shapes must already match.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor<T>>) -> Self {
        assert_eq!(tensors.len(), 5 + 12 * config.n_layers);
        let mut it = tensors.into_iter();
        let mut next = || it.next().unwrap();
        let tok_embed = next();
        let pos_embed = next();
        let blocks = (0..config.n_layers)
            .map(|_| Block {
                ln1_gain: next(),
                ln1_bias: next(),
                w_qkv: next(),
                b_qkv: next(),
                w_attn_out: next(),
                b_attn_out: next(),
                ln2_gain: next(),
                ln2_bias: next(),
                w_fc: next(),
                b_fc: next(),
                w_proj: next(),
                b_proj: next(),
            })
            .collect();
        Parameters { config: config.clone(), tok_embed, pos_embed, blocks, lnf_gain: next(), lnf_bias: next(), w_head: next() }
    }

    /// Scaled-normal weights, unit gains, zero biases; deterministic in
    /// `config.seed`.
    pub fn init(config: &ModelConfig) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let residual_std = INIT_STD / (2.0 * config.n_layers as f64).sqrt();
        let mut fill = |t: &mut Tensor<T>, std: f64| {
            let normal = Normal::new(0.0, std).unwrap();
            for x in t.data.iter_mut() {
                *x = T::of(normal.sample(&mut rng));
            }
        };
        fill(&mut p.tok_embed, INIT_STD);
        fill(&mut p.pos_embed, POS_INIT_STD);
        for b in p.blocks.iter_mut() {
            b.ln1_gain.data.fill(T::one());
            b.ln2_gain.data.fill(T::one());
            fill(&mut b.w_qkv, INIT_STD);
            fill(&mut b.w_attn_out, residual_std);
            fill(&mut b.w_fc, INIT_STD);
            fill(&mut b.w_proj, residual_std);
        }
        p.lnf_gain.data.fill(T::one());
        fill(&mut p.w_head, INIT_STD);
        p
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.tok_embed, &self.pos_embed];
        for b in &self.blocks {
            out.extend([
                &b.ln1_gain,
                &b.ln1_bias,
                &b.w_qkv,
                &b.b_qkv,
                &b.w_attn_out,
                &b.b_attn_out,
                &b.ln2_gain,
                &b.ln2_bias,
                &b.w_fc,
                &b.b_fc,
                &b.w_proj,
                &b.b_proj,
            ]);
        }
        out.extend([&self.lnf_gain, &self.lnf_bias, &self.w_head]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.tok_embed, &mut self.pos_embed];
        for b in self.blocks.iter_mut() {
            out.extend([
                &mut b.ln1_gain,
                &mut b.ln1_bias,
                &mut b.w_qkv,
                &mut b.b_qkv,
                &mut b.w_attn_out,
                &mut b.b_attn_out,
                &mut b.ln2_gain,
                &mut b.ln2_bias,
                &mut b.w_fc,
                &mut b.b_fc,
                &mut b.w_proj,
                &mut b.b_proj,
            ]);
        }
        out.extend([&mut self.lnf_gain, &mut self.lnf_bias, &mut self.w_head]);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// Converts element type (used by gradient checks).
    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        let tensors = self
            .tensors()
            .into_iter()
            .map(|t| Tensor { shape: t.shape.clone(), data: t.data.iter().map(|x| U::of(x.as_f64())).collect() })
            .collect();
        Parameters::from_tensors(&self.config, tensors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> ModelConfig {
        ModelConfig { n_layers: 2, n_heads: 2, d_model: 8, d_ff: 16, context_len: 6, vocab_size: 11, seed }
    }

    #[test]
    fn init_is_seeded() {
        let a = Parameters::<f32>::init(&cfg(1));
        let b = Parameters::<f32>::init(&cfg(1));
        let c = Parameters::<f32>::init(&cfg(2));
        assert_eq!(a, b);
        assert_ne!(a.tok_embed, c.tok_embed);
        for blk in &a.blocks {
            assert!(blk.ln1_gain.data.iter().chain(&blk.ln2_gain.data).all(|&g| g == 1.0));
            assert!(blk.b_fc.data.iter().all(|&x| x == 0.0));
        }
        assert!(a.lnf_gain.data.iter().all(|&g| g == 1.0));
        assert!(a.all_finite());
    }

    #[test]
    fn shapes_and_order_agree() {
        let p = Parameters::<f64>::init(&cfg(0));
        let shapes: Vec<Vec<usize>> = p.tensors().iter().map(|t| t.shape.clone()).collect();
        assert_eq!(shapes, Parameters::<f64>::shapes(&cfg(0)));
        let rebuilt = Parameters::from_tensors(&cfg(0), p.tensors().into_iter().cloned().collect());
        assert_eq!(rebuilt, p);
    }
}
