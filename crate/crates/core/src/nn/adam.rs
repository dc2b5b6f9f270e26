use serde::{Deserialize, Serialize};

use super::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Gradients,
    v: Gradients,
    step: u64,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.m
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.v
    }

    /// Applies one Adam update to `net`. Non-finite gradients are rejected
    /// before any state is touched.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if !grads.matches(net) || !self.m.matches(net) {
            return Err(Error::ArchitectureMismatch(
                net.widths(),
                vec![grads.len(), self.m.len()],
            ));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients"));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);

        net.version += 1;
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let gs = g.weights.iter().chain(&g.biases);
            let ms = m.weights.iter_mut().chain(m.biases.iter_mut());
            let vs = v.weights.iter_mut().chain(v.biases.iter_mut());
            for (((p, g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn scalar(w: f64) -> Mlp {
        Mlp::from_layers(&[1, 1], &[Activation::Identity], vec![(vec![w], vec![0.0])]).unwrap()
    }

    fn grads_for(net: &Mlp, gw: f64, gb: f64) -> Gradients {
        let mut g = Gradients::zeros_like(net);
        g.layers[0].weights[0] = gw;
        g.layers[0].biases[0] = gb;
        g
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = scalar(1.5);
        let mut adam = AdamState::new(&net, AdamConfig::default());
        let g = grads_for(&net, 0.0, 0.0);
        adam.step(&mut net, &g).unwrap();
        assert_eq!(net.layers()[0].weights()[0], 1.5);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2 on the first step, so delta = -lr * g / (|g| + eps).
        for g in [0.3, -2.0, 1e3] {
            let mut net = scalar(0.0);
            let mut adam = AdamState::new(&net, AdamConfig::default());
            let grads = grads_for(&net, g, 0.0);
            adam.step(&mut net, &grads).unwrap();
            let expected = -1e-3 * g / (g.abs() + 1e-8);
            assert!((net.layers()[0].weights()[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        let mut net = scalar(0.0);
        let mut adam = AdamState::new(
            &net,
            AdamConfig {
                lr: 0.1,
                ..AdamConfig::default()
            },
        );
        for _ in 0..1000 {
            let w = net.layers()[0].weights()[0];
            let g = grads_for(&net, 2.0 * (w - 5.0), 0.0);
            adam.step(&mut net, &g).unwrap();
        }
        assert!((net.layers()[0].weights()[0] - 5.0).abs() < 1e-3);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut net = scalar(1.0);
        let mut adam = AdamState::new(&net, AdamConfig::default());
        let g = grads_for(&net, f64::NAN, 0.0);
        let err = adam.step(&mut net, &g);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(adam.step_count(), 0);
        assert_eq!(net.layers()[0].weights()[0], 1.0);
    }
}
