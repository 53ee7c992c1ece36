use std::collections::HashMap;

use priorgan_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};

/// Gradients keyed by parameter name.
pub type GradMap = HashMap<String, Tensor>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam with per-parameter moments.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Tensor> = params.tensors().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Every parameter must have a gradient of its own shape.
    pub fn step(&mut self, params: &mut ParamSet, grads: &GradMap) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::contract("optimizer state does not match parameter set"));
        }
        for (name, p) in params.iter() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::contract(format!("missing gradient for parameter {name}")))?;
            if g.shape() != p.shape() {
                return Err(Error::contract(format!(
                    "gradient for {name} has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (name, p)) in params.entries_mut().iter_mut().enumerate() {
            let g = &grads[name.as_str()];
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (j, (theta, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *theta -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(v: f64) -> ParamSet {
        ParamSet::new(vec![("theta".into(), Tensor::scalar(v))]).unwrap()
    }

    fn grad(v: f64) -> GradMap {
        GradMap::from([("theta".to_string(), Tensor::scalar(v))])
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar_params(0.7);
        let mut adam = Adam::new(AdamConfig::with_lr(0.002), &p);
        for _ in 0..5 {
            adam.step(&mut p, &grad(0.0)).unwrap();
        }
        assert_eq!(p.get("theta").unwrap().item().unwrap(), 0.7);
        assert_eq!(adam.steps(), 5);
    }

    #[test]
    fn single_step_closed_form() {
        let (lr, b1, b2, eps) = (0.002, 0.5, 0.999, 1e-8);
        // Hand-rolled first step: m = (1-b1) g, v = (1-b2) g^2.
        let g = 1.0_f64;
        let m_hat = ((1.0 - b1) * g) / (1.0 - b1);
        let v_hat = ((1.0 - b2) * g * g) / (1.0 - b2);
        let expected = 1.0 - lr * m_hat / (v_hat.sqrt() + eps);

        let mut p = scalar_params(1.0);
        let mut adam = Adam::new(
            AdamConfig {
                lr,
                beta1: b1,
                beta2: b2,
                epsilon: eps,
            },
            &p,
        );
        adam.step(&mut p, &grad(g)).unwrap();
        let got = p.get("theta").unwrap().item().unwrap();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn convex_scalar_descent() {
        let mut p = scalar_params(1.0);
        let mut adam = Adam::new(AdamConfig::with_lr(0.002), &p);
        let mut prev = 1.0_f64;
        for _ in 0..100 {
            let theta = p.get("theta").unwrap().item().unwrap();
            adam.step(&mut p, &grad(2.0 * theta)).unwrap();
            let now = p.get("theta").unwrap().item().unwrap();
            assert!(now.abs() <= prev.abs());
            prev = now;
        }
        assert!(prev.abs() < 0.9, "{prev}");
    }

    #[test]
    fn sign_flip_moves_symmetrically() {
        for g in [0.3, 1.0, 17.0, 1e-3] {
            let mut up = scalar_params(0.0);
            let mut down = scalar_params(0.0);
            let mut a = Adam::new(AdamConfig::default(), &up);
            let mut b = Adam::new(AdamConfig::default(), &down);
            a.step(&mut up, &grad(g)).unwrap();
            b.step(&mut down, &grad(-g)).unwrap();
            let (u, d) = (
                up.get("theta").unwrap().item().unwrap(),
                down.get("theta").unwrap().item().unwrap(),
            );
            assert_eq!(u, -d);
            assert!(u < 0.0);
        }
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = scalar_params(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let err = adam.step(&mut p, &GradMap::new()).unwrap_err();
        assert!(err.to_string().contains("theta"));
    }
}
