use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::real::Real;
use super::tensor::Tensor;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moments are stored in the order of the
/// [`ParamSet`] they were created for.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
        Self { config, step: 0, m: zeros(), v: zeros() }
    }

    /// One update with learning rate `lr`.
    pub fn update(&mut self, params: &mut ParamSet<T>, grads: &[Tensor<T>], lr: f64) {
        assert_eq!(grads.len(), params.len(), "gradient count mismatch");
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (one, eps) = (T::one(), T::lit(eps));
        let step_size = T::lit(lr / bc1);
        let bc2_sqrt = T::lit(bc2.sqrt());
        for (((p, g), m), v) in params.tensors_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((pv, gv), mv), vv) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                *mv = b1 * *mv + (one - b1) * *gv;
                *vv = b2 * *vv + (one - b2) * *gv * *gv;
                *pv = *pv - step_size * *mv / ((*vv).sqrt() / bc2_sqrt + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_the_gradient_sign() {
        let mut p = ParamSet::<f64>::new();
        p.insert("w", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]));
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let g = Tensor::new(vec![3], vec![4.0, -0.1, 0.0]);
        adam.update(&mut p, &[g], 0.01);
        let w = p.get("w").unwrap().data();
        assert!((w[0] - 0.99).abs() < 1e-6);
        assert!((w[1] + 1.99).abs() < 1e-6);
        assert_eq!(w[2], 0.5);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = ParamSet::<f64>::new();
        p.insert("x", Tensor::new(vec![2], vec![3.0, -4.0]));
        let mut adam = Adam::new(AdamConfig::default(), &p);
        for _ in 0..2000 {
            let g = p.get("x").unwrap().map(|v| 2.0 * v);
            adam.update(&mut p, &[g], 0.05);
        }
        assert!(p.get("x").unwrap().data().iter().all(|v| v.abs() < 1e-2));
    }
}
