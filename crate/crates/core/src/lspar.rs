//! Least-squares piecewise affine regression:
//! `f(W) = 1/(2N) Σ_s (y_s − max_i w_iᵀx_s)²` with `W = [w_1 … w_k]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng;

/// Rows `w_i`, each of length `n`.
pub type Weights = Vec<Vec<f64>>;

/// Pieces of the planted model `max{x₁+x₂, x₁−x₂, −2x₁+x₂, −2x₁−x₂}`.
pub fn planted_model() -> Weights {
    vec![
        vec![1.0, 1.0],
        vec![1.0, -1.0],
        vec![-2.0, 1.0],
        vec![-2.0, -1.0],
    ]
}

pub const PLANTED_MODEL_ID: &str = "max4-2d";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsparDataset {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub seed: u64,
    pub noise_sigma: f64,
    pub model: String,
}

/// `N` samples with `x_s` uniform on `[−1,1]²` and Gaussian noise.
pub fn gen_lspar_data(n_samples: usize, noise_sigma: f64, seed: u64) -> LsparDataset {
    let mut r = rng::stream(seed, 0);
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).expect("finite sigma");
    let model = planted_model();
    let mut xs = Vec::with_capacity(n_samples);
    let mut ys = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let x = vec![r.random_range(-1.0..=1.0), r.random_range(-1.0..=1.0)];
        let e = if noise_sigma > 0.0 {
            noise.sample(&mut r)
        } else {
            0.0
        };
        ys.push(max_affine(&model, &x).0 + e);
        xs.push(x);
    }
    LsparDataset {
        xs,
        ys,
        seed,
        noise_sigma,
        model: PLANTED_MODEL_ID.into(),
    }
}

/// `(max_i w_iᵀx, smallest maximizing index)`.
pub fn max_affine(w: &Weights, x: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, wi) in w.iter().enumerate() {
        let v = dot(wi, x);
        if v > best.0 {
            best = (v, i);
        }
    }
    best
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LsparDataset {
    pub fn from_samples(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Self {
        LsparDataset {
            xs,
            ys,
            seed: 0,
            noise_sigma: 0.0,
            model: "custom".into(),
        }
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xs.first().map_or(0, |x| x.len())
    }

    pub fn objective(&self, w: &Weights) -> f64 {
        let n = self.len() as f64;
        self.xs
            .iter()
            .zip(&self.ys)
            .map(|(x, y)| {
                let r = y - max_affine(w, x).0;
                r * r
            })
            .sum::<f64>()
            / (2.0 * n)
    }

    /// Back-propagated pseudo-subgradient `½ Σ_s (g_s − y_s) x_s 1{i = argmax}`,
    /// ties to the smallest index.
    pub fn pseudo_subgradient(&self, w: &Weights) -> Weights {
        let mut g = vec![vec![0.0; self.dim()]; w.len()];
        for (x, y) in self.xs.iter().zip(&self.ys) {
            let (v, i) = max_affine(w, x);
            for (gi, xi) in g[i].iter_mut().zip(x) {
                *gi += 0.5 * (v - y) * xi;
            }
        }
        g
    }
}

pub fn flatten(w: &Weights) -> Vec<f64> {
    w.iter().flatten().copied().collect()
}

pub fn unflatten(v: &[f64], k: usize) -> Weights {
    let n = v.len() / k;
    (0..k).map(|i| v[i * n..(i + 1) * n].to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_planted_model_has_zero_loss() {
        let d = gen_lspar_data(10, 0.0, 1);
        assert_eq!(d.objective(&planted_model()), 0.0);
        assert_eq!(d.len(), 10);
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let a = gen_lspar_data(10, 0.1, 42);
        let b = gen_lspar_data(10, 0.1, 42);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn noise_level_is_as_configured() {
        let d = gen_lspar_data(100, 0.1, 7);
        let m = planted_model();
        let r: Vec<f64> =
            d.xs.iter()
                .zip(&d.ys)
                .map(|(x, y)| y - max_affine(&m, x).0)
                .collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt();
        assert!((0.07..=0.13).contains(&sd), "{sd}");
    }

    #[test]
    fn pseudo_subgradient_ties_go_to_smallest_index() {
        let d = LsparDataset::from_samples(vec![vec![1.0, 0.0]], vec![0.0]);
        let w = vec![vec![1.0, 0.0], vec![1.0, 5.0]];
        let g = d.pseudo_subgradient(&w);
        assert_eq!(g, vec![vec![0.5, 0.0], vec![0.0, 0.0]]);
    }
}
