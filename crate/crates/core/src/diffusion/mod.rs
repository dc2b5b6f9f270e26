//! State-conditioned denoising diffusion policy over continuous actions.
//!
//! The noise-prediction network sees `[state, x_t, t / T]` and predicts the
//! Gaussian noise mixed into `x_t`. Actions are drawn by ancestral sampling
//! from pure noise and clamped to `[-1, 1]`.

mod schedule;

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

pub use schedule::{default_bounds, make_schedule, NoiseSchedule};

use crate::error::{check_len, Error, Result};
use crate::nn::checkpoint::{read_f64, read_mlp, read_u32, write_mlp, write_u32};
use crate::nn::{Activation, AdamConfig, AdamState, Gradients, Mlp, Tape};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SDDP";

/// Critic view used by the actor objective: the value of batch sample `k`
/// when this agent's action is replaced by `action`, plus its gradient.
pub trait ActionValue {
    fn value_and_grad(&self, k: usize, action: &[f64]) -> Result<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone)]
pub struct DiffusionPolicy {
    net: Mlp,
    ema: Mlp,
    schedule: NoiseSchedule,
    state_dim: usize,
    action_dim: usize,
    opt: AdamState,
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

impl DiffusionPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        schedule: NoiseSchedule,
        adam: AdamConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let widths = [state_dim + action_dim + 1, hidden, hidden, action_dim];
        let net = Mlp::new(&widths, Activation::Relu, Activation::Identity, rng)?;
        Self::from_nets(net.clone(), net, schedule, state_dim, adam)
    }

    pub fn from_nets(
        net: Mlp,
        ema: Mlp,
        schedule: NoiseSchedule,
        state_dim: usize,
        adam: AdamConfig,
    ) -> Result<Self> {
        if !net.same_architecture(&ema) {
            return Err(Error::ArchitectureMismatch(net.widths(), ema.widths()));
        }
        let action_dim = net.output_dim();
        if net.input_dim() != state_dim + action_dim + 1 {
            return Err(Error::DimensionMismatch {
                what: "noise network input",
                expected: state_dim + action_dim + 1,
                got: net.input_dim(),
            });
        }
        let opt = AdamState::new(&net, adam);
        Ok(Self {
            net,
            ema,
            schedule,
            state_dim,
            action_dim,
            opt,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn ema(&self) -> &Mlp {
        &self.ema
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.opt
    }

    fn input(&self, state: &[f64], x: &[f64], t: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.state_dim + self.action_dim + 1);
        v.extend_from_slice(state);
        v.extend_from_slice(x);
        v.push(t as f64 / self.schedule.steps() as f64);
        v
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        check_len("policy state", self.state_dim, state.len())
    }

    pub fn predict_noise(&self, state: &[f64], x_t: &[f64], t: usize, use_ema: bool) -> Result<Vec<f64>> {
        self.check_state(state)?;
        check_len("noisy action", self.action_dim, x_t.len())?;
        let net = if use_ema { &self.ema } else { &self.net };
        net.forward(&self.input(state, x_t, t))
    }

    /// Ancestral sampling from `x_T ~ N(0, I)`; the result is clamped to
    /// `[-1, 1]`.
    pub fn sample_action<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R, use_ema: bool) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let net = if use_ema { &self.ema } else { &self.net };
        let mut x = standard_normal(rng, self.action_dim);
        for t in (1..=self.schedule.steps()).rev() {
            let eps = net.forward(&self.input(state, &x, t))?;
            let (c_x, c_eps) = self.schedule.reverse_coefficients(t);
            let sigma = self.schedule.sigma(t);
            for (xi, e) in x.iter_mut().zip(&eps) {
                *xi = c_x * *xi - c_eps * e;
            }
            if t > 1 {
                for xi in x.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *xi += sigma * z;
                }
            }
        }
        Ok(clamp_unit(x))
    }

    /// Denoising loss `mean_k ||eps_k - eps_theta(x_t, t_k, s_k)||^2` with
    /// the timesteps and noise supplied by the caller.
    pub fn loss_with(
        &self,
        states: &[&[f64]],
        actions: &[&[f64]],
        timesteps: &[usize],
        noise: &[Vec<f64>],
    ) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(&self.net);
        let loss = self.accumulate_bc(states, actions, timesteps, noise, 1.0, &mut grads)?;
        Ok((loss, grads))
    }

    fn accumulate_bc(
        &self,
        states: &[&[f64]],
        actions: &[&[f64]],
        timesteps: &[usize],
        noise: &[Vec<f64>],
        weight: f64,
        grads: &mut Gradients,
    ) -> Result<f64> {
        let n = states.len();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        check_len("action batch", n, actions.len())?;
        check_len("timestep batch", n, timesteps.len())?;
        check_len("noise batch", n, noise.len())?;
        let scale = 1.0 / n as f64;
        let mut total = 0.0;
        for k in 0..n {
            self.check_state(states[k])?;
            check_len("action", self.action_dim, actions[k].len())?;
            let x_t = self.schedule.forward_noise(actions[k], timesteps[k], &noise[k])?;
            let (pred, tape) = self.net.forward_with_tape(&self.input(states[k], &x_t, timesteps[k]))?;
            let mut g = Vec::with_capacity(self.action_dim);
            for (p, e) in pred.iter().zip(&noise[k]) {
                let r = p - e;
                total += r * r;
                g.push(2.0 * r * scale * weight);
            }
            if weight != 0.0 {
                self.net.backward_into(&tape, &g, grads)?;
            }
        }
        Ok(total * scale)
    }

    fn draw_bc_noise<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<usize>, Vec<Vec<f64>>) {
        let steps = self.schedule.steps();
        let ts = (0..n).map(|_| rng.random_range(1..=steps)).collect();
        let eps = (0..n).map(|_| standard_normal(rng, self.action_dim)).collect();
        (ts, eps)
    }

    /// Differentiable denoising rollout with frozen noise. Returns the
    /// clamped action and what is needed to backpropagate through it.
    fn rollout(&self, state: &[f64], x_init: Vec<f64>, z: &[Vec<f64>]) -> Result<(Vec<f64>, Rollout)> {
        let steps = self.schedule.steps();
        let mut x = x_init;
        let mut tapes = Vec::with_capacity(steps);
        for t in (1..=steps).rev() {
            let (eps, tape) = self.net.forward_with_tape(&self.input(state, &x, t))?;
            let (c_x, c_eps) = self.schedule.reverse_coefficients(t);
            let sigma = if t > 1 { self.schedule.sigma(t) } else { 0.0 };
            for ((xi, e), zi) in x.iter_mut().zip(&eps).zip(&z[t - 1]) {
                *xi = c_x * *xi - c_eps * e + sigma * zi;
            }
            tapes.push(tape);
        }
        let mask = x.iter().map(|v| v.abs() <= 1.0).collect();
        Ok((clamp_unit(x), Rollout { tapes, mask }))
    }

    fn backprop_rollout(&self, rollout: &Rollout, action_grad: &[f64], grads: &mut Gradients) -> Result<()> {
        let steps = self.schedule.steps();
        let mut g: Vec<f64> = action_grad
            .iter()
            .zip(&rollout.mask)
            .map(|(g, &m)| if m { *g } else { 0.0 })
            .collect();
        // tapes[0] was recorded at t = T.
        for t in 1..=steps {
            if g.iter().all(|v| *v == 0.0) {
                break;
            }
            let tape = &rollout.tapes[steps - t];
            let (c_x, c_eps) = self.schedule.reverse_coefficients(t);
            let out_grad: Vec<f64> = g.iter().map(|v| -c_eps * v).collect();
            let in_grad = self.net.backward_into(tape, &out_grad, grads)?;
            let xs = &in_grad[self.state_dim..self.state_dim + self.action_dim];
            for (gi, d) in g.iter_mut().zip(xs) {
                *gi = c_x * *gi + d;
            }
        }
        Ok(())
    }

    /// Applies one optimizer step with precomputed gradients.
    pub fn apply_gradients(&mut self, grads: &Gradients) -> Result<()> {
        self.opt.step(&mut self.net, grads)
    }

    pub fn update_ema(&mut self, decay: f64) -> Result<()> {
        self.ema.ema_update(&self.net, decay)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        write_u32(w, 1)?;
        write_u32(w, self.schedule.steps())?;
        w.write_all(&self.schedule.beta_min().to_le_bytes())?;
        w.write_all(&self.schedule.beta_max().to_le_bytes())?;
        write_u32(w, self.action_dim)?;
        write_u32(w, self.state_dim)?;
        write_mlp(&self.net, &mut *w)?;
        write_mlp(&self.ema, &mut *w)
    }

    pub fn load(path: &Path, adam: AdamConfig) -> Result<Self> {
        Self::read(&mut std::io::BufReader::new(std::fs::File::open(path)?), adam)
    }

    pub fn read<R: Read>(r: &mut R, adam: AdamConfig) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!("bad diffusion magic {magic:?}")));
        }
        let version = read_u32(r)?;
        if version != 1 {
            return Err(Error::Checkpoint(format!("unsupported diffusion version {version}")));
        }
        let steps = read_u32(r)? as usize;
        let beta_min = read_f64(r)?;
        let beta_max = read_f64(r)?;
        let action_dim = read_u32(r)? as usize;
        let state_dim = read_u32(r)? as usize;
        let schedule = make_schedule(steps, beta_min, beta_max)?;
        let net = read_mlp(&mut *r)?;
        let ema = read_mlp(&mut *r)?;
        if net.output_dim() != action_dim {
            return Err(Error::Checkpoint("action dimension does not match network".into()));
        }
        Self::from_nets(net, ema, schedule, state_dim, adam)
    }
}

struct Rollout {
    tapes: Vec<Tape>,
    mask: Vec<bool>,
}

fn clamp_unit(mut x: Vec<f64>) -> Vec<f64> {
    for v in x.iter_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    x
}

/// Denoising loss with timesteps drawn uniformly from `1..=T` and standard
/// normal noise, plus its gradient with respect to the online network.
pub fn diffusion_loss<R: Rng + ?Sized>(
    policy: &DiffusionPolicy,
    states: &[&[f64]],
    actions: &[&[f64]],
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    if states.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (ts, eps) = policy.draw_bc_noise(states.len(), rng);
    policy.loss_with(states, actions, &ts, &eps)
}

#[derive(Debug, Clone)]
pub struct ActorLoss {
    pub total: f64,
    pub bc: f64,
    /// `-mean Q`; zero when `eta == 0`.
    pub q: f64,
    pub critic_index: usize,
    pub grads: Gradients,
}

/// `L_bc + eta * L_q` with `L_q = -mean_k Q_i(s_k, pi(s_k))` for one critic
/// `i` picked uniformly at random. `pi` is a single denoising rollout whose
/// noise is drawn once and then held fixed, so it is differentiable.
pub fn diffusion_actor_loss<R: Rng + ?Sized>(
    policy: &DiffusionPolicy,
    critics: [&dyn ActionValue; 2],
    states: &[&[f64]],
    actions: &[&[f64]],
    eta: f64,
    rng: &mut R,
) -> Result<ActorLoss> {
    if states.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(eta >= 0.0) {
        return Err(Error::OutOfRange {
            what: "eta",
            value: eta.to_string(),
        });
    }
    let critic_index = rng.random_range(0..2usize);
    let (ts, eps) = policy.draw_bc_noise(states.len(), rng);
    let mut grads = Gradients::zeros_like(&policy.net);
    let bc = policy.accumulate_bc(states, actions, &ts, &eps, 1.0, &mut grads)?;

    let mut q = 0.0;
    if eta > 0.0 {
        let critic = critics[critic_index];
        let n = states.len() as f64;
        for (k, s) in states.iter().enumerate() {
            let x_init = standard_normal(rng, policy.action_dim);
            let z: Vec<Vec<f64>> = (0..policy.schedule.steps())
                .map(|_| standard_normal(rng, policy.action_dim))
                .collect();
            let (a, rollout) = policy.rollout(s, x_init, &z)?;
            let (value, dq_da) = critic.value_and_grad(k, &a)?;
            q -= value / n;
            let g: Vec<f64> = dq_da.iter().map(|d| -eta * d / n).collect();
            policy.backprop_rollout(&rollout, &g, &mut grads)?;
        }
    }
    Ok(ActorLoss {
        total: bc + eta * q,
        bc,
        q,
        critic_index,
        grads,
    })
}
