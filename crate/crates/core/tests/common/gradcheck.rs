use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use trajlab::corpus::Batch;
use trajlab::model::{ModelConfig, Parameters};
use trajlab::tokenizer::PAD_ID;

pub fn small_config() -> ModelConfig {
    ModelConfig { n_layers: 1, n_heads: 2, d_model: 8, d_ff: 32, context_len: 6, vocab_size: 50, seed: 11 }
}

/// Initial weights are too small to exercise the nonlinearities, so every
/// coordinate gets extra noise.
pub fn perturbed(cfg: &ModelConfig, std: f64, seed: u64) -> Parameters<f64> {
    let mut p = Parameters::<f64>::init(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, std).unwrap();
    for t in p.tensors_mut() {
        for x in t.data.iter_mut() {
            *x += noise.sample(&mut rng);
        }
    }
    p
}

pub fn random_batch(cfg: &ModelConfig, rows: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cfg.context_len;
    let v = cfg.vocab_size as u32;
    let token_ids: Vec<u32> = (0..rows * c).map(|_| rng.random_range(2..v)).collect();
    let mut target_ids: Vec<u32> = (0..rows * c).map(|_| rng.random_range(2..v)).collect();
    target_ids[c - 1] = PAD_ID;
    Batch { rows, context_len: c, token_ids, target_ids }
}

pub fn coordinate(p: &mut Parameters<f64>, index: usize) -> &mut f64 {
    let mut k = index;
    for t in p.tensors_mut() {
        if k < t.data.len() {
            return &mut t.data[k];
        }
        k -= t.data.len();
    }
    panic!("coordinate {index} out of range");
}

/// Fourth-order central difference in float64, independent of the
/// backward pass.
pub fn finite_difference(p: &Parameters<f64>, batch: &Batch, index: usize, h: f64) -> f64 {
    let mut q = p.clone();
    let x0 = *coordinate(&mut q, index);
    let mut at = |x: f64| {
        *coordinate(&mut q, index) = x;
        q.loss(batch).unwrap()
    };
    let (f2, f1, b1, b2) = (at(x0 + 2.0 * h), at(x0 + h), at(x0 - h), at(x0 - 2.0 * h));
    (-f2 + 8.0 * f1 - 8.0 * b1 + b2) / (12.0 * h)
}

pub fn flat(p: &Parameters<f64>) -> Vec<f64> {
    p.tensors().iter().flat_map(|t| t.data.clone()).collect()
}

pub fn flat32(p: &Parameters<f32>) -> Vec<f64> {
    p.tensors().iter().flat_map(|t| t.data.iter().map(|&x| x as f64).collect::<Vec<_>>()).collect()
}

pub struct GradErrors {
    pub coords: usize,
    pub worst64: f64,
    pub worst32: f64,
}

/// Analytic gradients of a perturbed small model against finite
/// differences on every coordinate, in both precisions.
pub fn gradient_errors() -> GradErrors {
    let cfg = small_config();
    let p = perturbed(&cfg, 0.3, 1);
    let batch = random_batch(&cfg, 3, 2);
    let (_, g64) = p.loss_and_grads(&batch).unwrap();
    let (_, g32) = p.cast::<f32>().loss_and_grads(&batch).unwrap();
    let (g64, g32) = (flat(&g64), flat32(&g32));
    let (mut worst64, mut worst32) = (0.0f64, 0.0f64);
    for i in 0..g64.len() {
        let fd = finite_difference(&p, &batch, i, 1e-3);
        let rel = |a: f64, floor: f64| (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
        worst64 = worst64.max(rel(g64[i], 1e-6));
        worst32 = worst32.max(rel(g32[i], 1e-3));
    }
    GradErrors { coords: g64.len(), worst64, worst32 }
}
