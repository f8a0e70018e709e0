use serde::{Deserialize, Serialize};

use super::{Parameters, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        AdamSettings { lr: 1e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub m: Parameters<T>,
    pub v: Parameters<T>,
    pub t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &Parameters<T>) -> Self {
        Adam { m: Parameters::zeros(&params.config), v: Parameters::zeros(&params.config), t: 0 }
    }

    /// One bias-corrected update with a constant learning rate.
    pub fn step(&mut self, params: &mut Parameters<T>, grads: &Parameters<T>, s: &AdamSettings) {
        self.t += 1;
        let b1 = T::of(s.beta1);
        let b2 = T::of(s.beta2);
        let one = T::one();
        let c1 = T::of(1.0 - s.beta1.powi(self.t as i32));
        let c2 = T::of(1.0 - s.beta2.powi(self.t as i32));
        let lr = T::of(s.lr);
        let eps = T::of(s.eps);
        let ps = params.tensors_mut();
        let gs = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                let mi = b1 * m.data[i] + (one - b1) * gi;
                let vi = b2 * v.data[i] + (one - b2) * gi * gi;
                m.data[i] = mi;
                v.data[i] = vi;
                p.data[i] = p.data[i] - lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = ModelConfig { n_layers: 1, n_heads: 1, d_model: 2, d_ff: 2, context_len: 2, vocab_size: 3, seed: 0 };
        let mut p = Parameters::<f64>::zeros(&cfg);
        let mut g = Parameters::<f64>::zeros(&cfg);
        g.w_head.data[0] = 3.0;
        g.w_head.data[1] = -0.5;
        let mut adam = Adam::new(&p);
        let s = AdamSettings { lr: 0.1, eps: 1e-12, ..Default::default() };
        adam.step(&mut p, &g, &s);
        assert!((p.w_head.data[0] + 0.1).abs() < 1e-9);
        assert!((p.w_head.data[1] - 0.1).abs() < 1e-9);
        assert_eq!(p.w_head.data[2], 0.0);
        assert_eq!(adam.t, 1);
    }
}
