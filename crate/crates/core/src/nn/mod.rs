//! Dense multilayer perceptrons with hand-written reverse-mode gradients.
//!
//! Every network in the crate (actors, critics and the noise-prediction
//! network of the diffusion policy) is an [`Mlp`]. A forward pass can record a
//! [`Tape`] of per-layer activations; [`Mlp::backward`] replays the tape to
//! produce parameter gradients and the gradient with respect to the input.
//!
//! Weights are row-major `(out, in)` matrices of `f64`.

mod adam;
pub mod checkpoint;

pub use adam::{AdamConfig, AdamState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Default hidden width.
pub const DEFAULT_HIDDEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative written in terms of the activation output `y = f(z)`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// A dense layer: `y = activation(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.in_dim)
                .zip(&self.biases)
                .map(|(row, b)| self.activation.apply(dot(row, input) + b)),
        );
    }
}

/// Per-layer activations recorded by [`Mlp::forward_with_tape`].
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    widths: Vec<usize>,
    /// `values[0]` is the input, `values[l + 1]` the output of layer `l`.
    values: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("tape always holds the input")
    }

    pub fn input(&self) -> &[f64] {
        &self.values[0]
    }
}

/// Gradient accumulators with exactly the shapes of an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerGrad] {
        &self.layers
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scale(&mut self, factor: f64) {
        self.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn fill_zero(&mut self) {
        self.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::InvalidConfig("gradient shapes differ".into()));
        }
        self.iter_mut().zip(other.iter()).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    fn same_shape(&self, other: &Gradients) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.len() == b.weights.len() && a.biases.len() == b.biases.len()
            })
    }

    pub(crate) fn matches(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len()
            })
    }
}

/// Multilayer perceptron.
///
/// `version` is bumped on every parameter mutation so that a [`Tape`]
/// recorded before an update cannot be replayed against the new weights.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Mlp {
    /// Randomly initialised network. Weights and biases are drawn uniformly
    /// from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(widths, hidden, output)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidConfig(
                "a network needs at least input and output widths".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "layer widths must be positive: {widths:?}"
            )));
        }
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer::zeros(w[0], w[1], if i + 1 == n { output } else { hidden }))
            .collect();
        Ok(Self { layers, version: 0 })
    }

    pub(crate) fn from_layers(
        widths: &[usize],
        activations: &[Activation],
        params: Vec<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Self> {
        let mut net = Self::zeros(widths, Activation::Identity, Activation::Identity)?;
        if activations.len() != net.layers.len() || params.len() != net.layers.len() {
            return Err(Error::InvalidConfig("layer count mismatch".into()));
        }
        for ((layer, act), (w, b)) in net.layers.iter_mut().zip(activations).zip(params) {
            check_len("layer weights", layer.weights.len(), w.len())?;
            check_len("layer biases", layer.biases.len(), b.len())?;
            layer.activation = *act;
            layer.weights = w;
            layer.biases = b;
        }
        Ok(net)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].in_dim];
        w.extend(self.layers.iter().map(|l| l.out_dim));
        w
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// All parameters in storage order: per layer, weights then biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    /// Mutable parameter access; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim && a.activation == b.activation)
    }

    fn require_same_architecture(&self, other: &Mlp) -> Result<()> {
        if self.same_architecture(other) {
            Ok(())
        } else {
            Err(Error::ArchitectureMismatch(self.widths(), other.widths()))
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("network input", self.input_dim(), input.len())?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_with_tape(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        check_len("network input", self.input_dim(), input.len())?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.out_dim);
            layer.forward_into(values.last().unwrap(), &mut out);
            values.push(out);
        }
        let output = values.last().unwrap().clone();
        Ok((
            output,
            Tape {
                version: self.version,
                widths: self.widths(),
                values,
            },
        ))
    }

    fn check_tape(&self, tape: &Tape) -> Result<()> {
        if tape.version != self.version || tape.widths != self.widths() {
            return Err(Error::StaleTape);
        }
        Ok(())
    }

    /// Parameter and input gradients of `output_grad · output` for the
    /// computation recorded in `tape`.
    pub fn backward(&self, tape: &Tape, output_grad: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_into(tape, output_grad, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Like [`Mlp::backward`] but accumulates into `grads`, returning the
    /// input gradient.
    pub fn backward_into(
        &self,
        tape: &Tape,
        output_grad: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        self.check_tape(tape)?;
        check_len("output gradient", self.output_dim(), output_grad.len())?;
        if !grads.matches(self) {
            return Err(Error::InvalidConfig("gradient buffer shape mismatch".into()));
        }

        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = output_grad
            .iter()
            .zip(&tape.values[last + 1])
            .map(|(g, y)| g * self.layers[last].activation.derivative_from_output(*y))
            .collect();

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let x = &tape.values[l];
            let g = &mut grads.layers[l];
            for ((grow, d), gb) in g
                .weights
                .chunks_exact_mut(layer.in_dim)
                .zip(&delta)
                .zip(g.biases.iter_mut())
            {
                *gb += d;
                if *d != 0.0 {
                    axpy(*d, x, grow);
                }
            }

            let mut prev = vec![0.0; layer.in_dim];
            for (row, d) in layer.weights.chunks_exact(layer.in_dim).zip(&delta) {
                if *d != 0.0 {
                    axpy(*d, row, &mut prev);
                }
            }
            if l > 0 {
                let act = self.layers[l - 1].activation;
                for (p, y) in prev.iter_mut().zip(x) {
                    *p *= act.derivative_from_output(*y);
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// `self <- (1 - tau) * self + tau * online`.
    pub fn soft_update(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::OutOfRange {
                what: "tau",
                value: tau.to_string(),
            });
        }
        self.blend(online, 1.0 - tau, tau)
    }

    /// `self <- decay * self + (1 - decay) * online`.
    pub fn ema_update(&mut self, online: &Mlp, decay: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::OutOfRange {
                what: "decay",
                value: decay.to_string(),
            });
        }
        self.blend(online, decay, 1.0 - decay)
    }

    fn blend(&mut self, online: &Mlp, keep: f64, take: f64) -> Result<()> {
        self.require_same_architecture(online)?;
        self.version += 1;
        if take == 0.0 {
            return Ok(());
        }
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            if keep == 0.0 {
                t.weights.copy_from_slice(&o.weights);
                t.biases.copy_from_slice(&o.biases);
                continue;
            }
            for (a, b) in t
                .weights
                .iter_mut()
                .chain(t.biases.iter_mut())
                .zip(o.weights.iter().chain(o.biases.iter()))
            {
                *a = keep * *a + take * b;
            }
        }
        Ok(())
    }

    /// Euclidean distance between the parameter vectors of two networks.
    pub fn distance(&self, other: &Mlp) -> Result<f64> {
        self.require_same_architecture(other)?;
        Ok(self
            .params()
            .zip(other.params())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut acc = [0.0f64; 4];
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_net(w: f64, b: f64, output: Activation) -> Mlp {
        Mlp::from_layers(&[1, 1], &[output], vec![(vec![w], vec![b])]).unwrap()
    }

    /// Independent oracle: central finite differences on a scalar loss.
    fn finite_diff(net: &Mlp, input: &[f64], weights: &[f64], h: f64) -> Vec<f64> {
        let loss = |n: &Mlp| -> f64 {
            n.forward(input)
                .unwrap()
                .iter()
                .zip(weights)
                .map(|(o, w)| o * w)
                .sum()
        };
        let n = net.param_count();
        (0..n)
            .map(|k| {
                let mut plus = net.clone();
                *plus.params_mut().nth(k).unwrap() += h;
                let mut minus = net.clone();
                *minus.params_mut().nth(k).unwrap() -= h;
                (loss(&plus) - loss(&minus)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let net = Mlp::zeros(&[4, 8, 8, 3], Activation::Relu, Activation::Identity).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn linear_identity_and_tanh_saturation() {
        assert_eq!(
            scalar_net(1.0, 0.0, Activation::Identity)
                .forward(&[2.0])
                .unwrap(),
            vec![2.0]
        );
        let y = scalar_net(1.0, 0.0, Activation::Tanh).forward(&[100.0]).unwrap()[0];
        let reference = (100.0f64.exp() - (-100.0f64).exp()) / (100.0f64.exp() + (-100.0f64).exp());
        assert!((0.99..=1.0).contains(&y));
        assert!((y - reference).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = Mlp::zeros(&[3, 2], Activation::Relu, Activation::Identity).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Mlp::zeros(&[3, 0, 2], Activation::Relu, Activation::Identity).is_err());
    }

    #[test]
    fn squared_output_bias_gradient() {
        let net = scalar_net(1.0, 0.0, Activation::Identity);
        let (out, tape) = net.forward_with_tape(&[3.0]).unwrap();
        let (g, gin) = net.backward(&tape, &[2.0 * out[0]]).unwrap();
        assert_eq!(g.layers()[0].biases[0], 6.0);
        assert_eq!(g.layers()[0].weights[0], 18.0);
        assert_eq!(gin, vec![6.0]);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[5, 7, 7, 2], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        let (_, tape) = net.forward_with_tape(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let (g, gin) = net.backward(&tape, &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
        assert!(gin.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let net =
                Mlp::new(&[4, 9, 6, 3], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
            let input: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let weights: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, tape) = net.forward_with_tape(&input).unwrap();
            let (g, _) = net.backward(&tape, &weights).unwrap();
            let fd = finite_diff(&net, &input, &weights, 1e-6);
            for (a, n) in g.iter().zip(&fd) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
                assert!(rel < 1e-5 || (a - n).abs() < 1e-9, "{a} vs {n}");
            }
        }
    }

    #[test]
    fn stale_tape_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::new(&[2, 4, 1], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let (_, tape) = net.forward_with_tape(&[0.5, 0.5]).unwrap();
        *net.params_mut().next().unwrap() += 1.0;
        assert!(matches!(net.backward(&tape, &[1.0]), Err(Error::StaleTape)));
        let other = Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let (_, tape) = other.forward_with_tape(&[0.5, 0.5]).unwrap();
        assert!(matches!(net.backward(&tape, &[1.0]), Err(Error::StaleTape)));
    }

    #[test]
    fn soft_update_limits_and_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let online = Mlp::new(&[3, 5, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let old = Mlp::new(&[3, 5, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();

        let mut t = old.clone();
        t.soft_update(&online, 1.0).unwrap();
        assert!(t.params().zip(online.params()).all(|(a, b)| a.to_bits() == b.to_bits()));

        let mut t = old.clone();
        t.soft_update(&online, 0.0).unwrap();
        assert_eq!(t, old);

        let mut t = scalar_net(0.0, 0.0, Activation::Identity);
        t.soft_update(&scalar_net(1.0, 1.0, Activation::Identity), 0.01)
            .unwrap();
        assert_eq!(t.layers()[0].weights()[0], 0.01);

        let bad = Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(
            t.soft_update(&bad, 0.5),
            Err(Error::ArchitectureMismatch(..))
        ));
    }

    #[test]
    fn ema_update_limits_and_arithmetic() {
        let mut ema = scalar_net(2.0, 2.0, Activation::Identity);
        let online = scalar_net(4.0, 4.0, Activation::Identity);
        ema.ema_update(&online, 0.5).unwrap();
        assert_eq!(ema.layers()[0].weights()[0], 3.0);

        let mut ema = scalar_net(2.0, 2.0, Activation::Identity);
        ema.ema_update(&online, 0.0).unwrap();
        assert_eq!(ema, online);
        let mut ema = scalar_net(2.0, 2.0, Activation::Identity);
        ema.ema_update(&online, 1.0).unwrap();
        assert_eq!(ema, scalar_net(2.0, 2.0, Activation::Identity));
    }
}
