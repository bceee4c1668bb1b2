use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpModel};
use super::tensor::Real;
use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment estimates for one model.
#[derive(Debug, Clone)]
pub struct AdamState<T = f32> {
    config: AdamConfig,
    first: Gradients<T>,
    second: Gradients<T>,
    step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(model: &MlpModel<T>, config: AdamConfig) -> Self {
        Self {
            config,
            first: Gradients::zeros_like(model),
            second: Gradients::zeros_like(model),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Gradients<T> {
        &self.first
    }

    pub fn second_moment(&self) -> &Gradients<T> {
        &self.second
    }

    /// One bias-corrected Adam update of `model` in place.
    pub fn step(&mut self, model: &mut MlpModel<T>, grads: &Gradients<T>) -> Result<()> {
        ensure!(grads.matches(model), "gradient shapes do not match the model");
        ensure!(self.first.matches(model), "optimizer state shapes do not match the model");
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let lr = T::from_f64_lossy(c.learning_rate);
        let eps = T::from_f64_lossy(c.epsilon);
        let corr1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let corr2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        let one = T::one();

        let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for (l, layer) in model.layers_mut().iter_mut().enumerate() {
            let w = layer.weight.data_mut().iter_mut();
            let g = grads.weights[l].data();
            let m = self.first.weights[l].data_mut();
            let v = self.second.weights[l].data_mut();
            for (((p, &g), m), v) in w.zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                update(p, g, m, v);
            }
            let b = layer.bias.iter_mut();
            let g = &grads.biases[l];
            let m = &mut self.first.biases[l];
            let v = &mut self.second.biases[l];
            for (((p, &g), m), v) in b.zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                update(p, g, m, v);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> MlpModel<f64> {
        MlpModel::new(&[2, 3, 2, 2], 5).unwrap()
    }

    fn filled(m: &MlpModel<f64>, f: impl Fn(usize) -> f64) -> Gradients<f64> {
        let mut g = Gradients::zeros_like(m);
        let mut k = 0;
        for (w, b) in g.weights.iter_mut().zip(g.biases.iter_mut()) {
            for v in w.data_mut().iter_mut().chain(b.iter_mut()) {
                *v = f(k);
                k += 1;
            }
        }
        g
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut m = model();
        let before = m.clone();
        let mut opt = AdamState::new(&m, AdamConfig::default());
        let g = Gradients::zeros_like(&m);
        opt.step(&mut m, &g).unwrap();
        opt.step(&mut m, &g).unwrap();
        assert_eq!(m, before);
        assert_eq!(opt.step_count(), 2);
    }

    #[test]
    fn single_step_matches_closed_form() {
        let mut m = model();
        let before: Vec<f64> = m.parameters().copied().collect();
        let cfg = AdamConfig::default();
        let mut opt = AdamState::new(&m, cfg);
        let g = filled(&m, |k| (k as f64 - 10.0) * 0.37);
        opt.step(&mut m, &g).unwrap();
        // bias-corrected moments after one step are g and g², so the update is
        // -lr * g / (|g| + eps)
        for ((p, p0), g) in m.parameters().zip(&before).zip(g.flatten()) {
            let want = p0 - cfg.learning_rate * g / (g.abs() + cfg.epsilon);
            assert!((p - want).abs() < 1e-12, "{p} vs {want}");
        }
    }

    #[test]
    fn second_moment_after_two_identical_steps() {
        let mut m = model();
        let cfg = AdamConfig::default();
        let mut opt = AdamState::new(&m, cfg);
        let g = filled(&m, |k| 0.1 + k as f64 * 0.05);
        opt.step(&mut m, &g).unwrap();
        opt.step(&mut m, &g).unwrap();
        // v₂ = (1-β₂)β₂ g² + (1-β₂) g² = (1-β₂²) g²
        let scale = 1.0 - cfg.beta2 * cfg.beta2;
        for (v, g) in opt.second_moment().flatten().iter().zip(g.flatten()) {
            assert!((v - scale * g * g).abs() < 1e-15);
        }
        // the bias-corrected mean is exactly g²
        let corr = 1.0 - cfg.beta2.powi(2);
        for (v, g) in opt.second_moment().flatten().iter().zip(g.flatten()) {
            assert!((v / corr - g * g).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut m = model();
        let mut opt = AdamState::new(&m, AdamConfig::default());
        let mut bigger = m.clone();
        bigger.expand_outputs(1).unwrap();
        let g = Gradients::zeros_like(&bigger);
        assert!(opt.step(&mut m, &g).is_err());
        assert!(opt.step(&mut bigger, &g).is_err());
    }
}
