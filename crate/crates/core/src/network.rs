//! Plain-float two-layer ReLU network h(x) = sum_j a_j * max(0, w_j^T x).
//!
//! Used for limit-process evaluation and for training at moderate scales
//! where the weights are representable as f64 (alpha down to ~1e-150). The
//! log-domain representation for extreme scales lives in [`crate::scaled`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{dot, norm, OrthonormalDataset};
use crate::init::InitDraw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNetwork {
    /// Output weights, one per neuron.
    pub a: Vec<f64>,
    /// Hidden weights, m rows of length d.
    pub w: Vec<Vec<f64>>,
}

impl DenseNetwork {
    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            a: vec![0.0; m],
            w: vec![vec![0.0; d]; m],
        }
    }

    /// Materialize an [`InitDraw`]: a_j = alpha * s_j, w_j = alpha * u_j.
    /// Only meaningful when exp(alpha_log) does not underflow; below roughly
    /// -745 this silently produces the zero network.
    pub fn from_init(init: &InitDraw) -> Self {
        let alpha = init.alpha_log.exp();
        let a = init.signs.iter().map(|s| alpha * s).collect();
        let w = init
            .directions
            .iter()
            .map(|u| u.iter().map(|x| alpha * x).collect())
            .collect();
        Self { a, w }
    }

    /// Uniform He initialization: hidden weights uniform on [-1/sqrt(d), 1/sqrt(d)],
    /// output weights uniform on [-1/sqrt(m), 1/sqrt(m)]. Not balanced.
    pub fn he_uniform(m: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wb = 1.0 / (d as f64).sqrt();
        let ab = 1.0 / (m as f64).sqrt();
        let w = (0..m)
            .map(|_| (0..d).map(|_| rng.gen_range(-wb..=wb)).collect())
            .collect();
        let a = (0..m).map(|_| rng.gen_range(-ab..=ab)).collect();
        Self { a, w }
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn d(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    /// Network output on an arbitrary input vector.
    pub fn forward(&self, x: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.w)
            .map(|(a, w)| a * dot(w, x).max(0.0))
            .sum()
    }

    /// Output on the i-th dataset input, using the identity fast path when
    /// available.
    pub fn forward_on(&self, data: &OrthonormalDataset, i: usize) -> f64 {
        self.a
            .iter()
            .zip(&self.w)
            .map(|(a, w)| a * data.dot_input(i, w).max(0.0))
            .sum()
    }

    /// r_i = h(x_i) - y_i for every datum.
    pub fn residuals(&self, data: &OrthonormalDataset) -> Vec<f64> {
        (0..data.n())
            .map(|i| self.forward_on(data, i) - data.labels()[i])
            .collect()
    }

    /// Mean squared error loss (1/2n) * sum_i (h(x_i) - y_i)^2.
    pub fn loss(&self, data: &OrthonormalDataset) -> f64 {
        let r = self.residuals(data);
        r.iter().map(|r| r * r).sum::<f64>() / (2.0 * data.n() as f64)
    }

    /// Half squared parameter norm (1/2)(|a|^2 + |W|_F^2).
    pub fn half_sq_norm(&self) -> f64 {
        let a2: f64 = self.a.iter().map(|a| a * a).sum();
        let w2: f64 = self.w.iter().map(|w| dot(w, w)).sum();
        0.5 * (a2 + w2)
    }

    /// Map a network expressed in data coordinates (w_j = sum_i c_i x_i with
    /// coefficients as entries) to ambient coordinates of the given dataset.
    /// For the identity basis this is a copy.
    pub fn to_ambient(&self, data: &OrthonormalDataset) -> DenseNetwork {
        let d = data.d();
        let w = self
            .w
            .iter()
            .map(|coeffs| {
                let mut out = vec![0.0; d];
                for (i, &c) in coeffs.iter().enumerate() {
                    if c != 0.0 {
                        data.add_input(i, c, &mut out);
                    }
                }
                out
            })
            .collect();
        DenseNetwork {
            a: self.a.clone(),
            w,
        }
    }

    pub fn w_norms(&self) -> Vec<f64> {
        self.w.iter().map(|w| norm(w)).collect()
    }
}
