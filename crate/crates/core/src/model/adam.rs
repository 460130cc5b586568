use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, Params};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
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

/// First and second moment estimates with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Params,
    v: Params,
    step: u64,
}

impl AdamState {
    pub fn new(model: &ModelConfig, config: AdamConfig) -> AdamState {
        AdamState {
            config,
            m: Params::zeros(model),
            v: Params::zeros(model),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub(crate) fn moments(&self) -> (&Params, &Params) {
        (&self.m, &self.v)
    }

    pub(crate) fn from_parts(config: AdamConfig, m: Params, v: Params, step: u64) -> AdamState {
        AdamState { config, m, v, step }
    }

    /// One update of `params` against `grads`, at learning rate `lr`.
    pub fn update(&mut self, params: &mut Params, grads: &Params, lr: f64) -> Result<(), ModelError> {
        let shapes = |p: &Params| p.tensors().iter().map(|t| t.shape.clone()).collect::<Vec<_>>();
        if shapes(params) != shapes(grads) || shapes(params) != shapes(&self.m) {
            return Err(ModelError::ShapeMismatch("optimizer, parameter and gradient layouts differ".into()));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        let tensors = params.tensors_mut().iter_mut();
        let moments = self.m.tensors_mut().iter_mut().zip(self.v.tensors_mut().iter_mut());
        for ((p, g), (m, v)) in tensors.zip(grads.tensors()).zip(moments) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gi;
                v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * gi * gi;
                let mhat = m.data[i] / c1;
                let vhat = v.data[i] / c2;
                p.data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ModelConfig, Params, Params) {
        let cfg = ModelConfig::tiny(10);
        let p = Params::init(&cfg, 0);
        let mut g = Params::zeros(&cfg);
        for t in g.tensors_mut() {
            for (i, x) in t.data.iter_mut().enumerate() {
                *x = if i % 2 == 0 { 0.37 } else { -2.5 };
            }
        }
        (cfg, p, g)
    }

    #[test]
    fn first_step_moves_each_weight_by_lr() {
        let (cfg, mut p, g) = setup();
        let before = p.clone();
        let mut adam = AdamState::new(&cfg, AdamConfig::default());
        adam.update(&mut p, &g, 1e-3).unwrap();
        for ((a, b), gt) in p.tensors().iter().zip(before.tensors()).zip(g.tensors()) {
            for i in 0..a.len() {
                let want = -1e-3 * gt.data[i].signum();
                assert!((a.data[i] - b.data[i] - want).abs() < 1e-10);
            }
        }
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn constant_gradient_keeps_unit_step() {
        let (cfg, mut p, g) = setup();
        let mut adam = AdamState::new(&cfg, AdamConfig::default());
        for _ in 0..50 {
            let before = p.tensors()[0].data[1];
            adam.update(&mut p, &g, 0.01).unwrap();
            assert!((p.tensors()[0].data[1] - before - 0.01).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let (cfg, mut p, _) = setup();
        let before = p.clone();
        let mut adam = AdamState::new(&cfg, AdamConfig::default());
        adam.update(&mut p, &Params::zeros(&cfg), 0.1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let (cfg, mut p, _) = setup();
        let mut other = cfg.clone();
        other.d_ff = 4;
        let mut adam = AdamState::new(&cfg, AdamConfig::default());
        let err = adam.update(&mut p, &Params::zeros(&other), 0.1);
        assert!(matches!(err, Err(ModelError::ShapeMismatch(_))));
        assert_eq!(adam.step_count(), 0);
    }
}
