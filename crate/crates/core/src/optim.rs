//! Adam with bias correction.

use alloc::vec::Vec;

use crate::math::{powi, sqrt, Real};
use crate::tensor::Mat;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: i32,
    m: Vec<Vec<Real>>,
    v: Vec<Vec<Real>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Mat]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| alloc::vec![0.0; p.data.len()])
                .collect()
        };
        Adam {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One update. `grads[i]` of `None` means a zero gradient.
    pub fn step(&mut self, params: &mut [Mat], grads: &[Option<Mat>]) {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let c1 = 1.0 - powi(beta1, self.step);
        let c2 = 1.0 - powi(beta2, self.step);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads.get(i).and_then(|g| g.as_ref());
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.data.len() {
                let gj = g.map_or(0.0, |g| g.data[j]);
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                p.data[j] -= lr * mhat / (sqrt(vhat) + eps);
            }
        }
    }

    pub fn moments(&self, i: usize) -> (&[Real], &[Real]) {
        (&self.m[i], &self.v[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = [Mat::scalar(1.5)];
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step(&mut p, &[Some(Mat::scalar(2.0))]);
        let after_one = p[0].data[0];
        let (m1, v1) = (adam.moments(0).0[0], adam.moments(0).1[0]);
        // with a zero gradient the bias-corrected step is still nonzero unless moments are zero,
        // so check from a fresh optimizer as well
        let mut q = [Mat::scalar(1.5)];
        let mut fresh = Adam::new(AdamConfig::default(), &q);
        fresh.step(&mut q, &[None]);
        assert_eq!(q[0].data[0], 1.5);
        adam.step(&mut p, &[None]);
        assert!((adam.moments(0).0[0] - 0.9 * m1).abs() < 1e-15);
        assert!((adam.moments(0).1[0] - 0.999 * v1).abs() < 1e-15);
        assert!(p[0].data[0] < after_one);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // m = 0.1 g, v = 0.001 g², m̂ = g, v̂ = g², Δ = −lr · g / (|g| + eps)
        let g = 0.5;
        let mut p = [Mat::scalar(1.0)];
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step(&mut p, &[Some(Mat::scalar(g))]);
        let expected = 1.0 - 1e-3 * g / (g + 1e-8);
        assert!((p[0].data[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn minimizes_square() {
        let mut p = [Mat::scalar(1.0)];
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.05,
                ..AdamConfig::default()
            },
            &p,
        );
        for _ in 0..200 {
            let g = 2.0 * p[0].data[0];
            adam.step(&mut p, &[Some(Mat::scalar(g))]);
        }
        assert!(p[0].data[0].abs() < 0.05);
    }
}
