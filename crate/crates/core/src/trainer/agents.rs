use rand::Rng;

use crate::diffusion::{diffusion_actor_loss, ActionValue, DiffusionPolicy};
use crate::env::Vec3;
use crate::error::{check_len, Error, Result};
use crate::nn::{AdamConfig, AdamState, Gradients, Mlp};

/// Greedy nearest-first assignment with balanced group sizes.
///
/// Every target first receives up to `floor(N_A / N_T)` AUVs by repeatedly
/// taking the closest free (AUV, target) pair; the remaining AUVs then go to
/// their nearest target that has not yet received an extra one. Ties are
/// broken by index, so the result is stable.
pub fn assign_targets(auvs: &[Vec3], targets: &[Vec3]) -> Result<Vec<usize>> {
    let (na, nt) = (auvs.len(), targets.len());
    if nt == 0 {
        return Err(Error::InvalidConfig("no targets to assign".into()));
    }
    if na < nt {
        return Err(Error::InvalidConfig(format!("{na} AUVs cannot cover {nt} targets")));
    }
    let mut pairs: Vec<(f64, usize, usize)> = auvs
        .iter()
        .enumerate()
        .flat_map(|(i, a)| targets.iter().enumerate().map(move |(t, p)| ((a - p).norm(), i, t)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let base = na / nt;
    let mut assigned = vec![usize::MAX; na];
    let mut load = vec![0usize; nt];
    for cap in [base, base + 1] {
        for &(_, i, t) in &pairs {
            if assigned[i] == usize::MAX && load[t] < cap {
                assigned[i] = t;
                load[t] += 1;
            }
        }
    }
    Ok(assigned)
}

/// Twin critics with their target copies and optimizers.
#[derive(Debug, Clone)]
pub struct CriticPair {
    pub online: [Mlp; 2],
    pub target: [Mlp; 2],
    opt: [AdamState; 2],
}

impl CriticPair {
    pub fn new(q1: Mlp, q2: Mlp, adam: AdamConfig) -> Self {
        let opt = [AdamState::new(&q1, adam), AdamState::new(&q2, adam)];
        Self {
            target: [q1.clone(), q2.clone()],
            online: [q1, q2],
            opt,
        }
    }

    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            t.soft_update(o, tau)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.online.iter().chain(&self.target).all(Mlp::is_finite)
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionAgent {
    pub policy: DiffusionPolicy,
    pub critics: CriticPair,
    /// Gradient steps taken by the noise network.
    pub steps: u64,
}

/// Everything one AUV learns: the acting DDPG actor, its centralized twin
/// critics and the optional paired diffusion agent.
#[derive(Debug, Clone)]
pub struct AgentNets {
    pub actor: Mlp,
    pub actor_target: Mlp,
    actor_opt: AdamState,
    pub critics: CriticPair,
    pub diffusion: Option<DiffusionAgent>,
}

impl AgentNets {
    pub fn new(actor: Mlp, critics: CriticPair, diffusion: Option<DiffusionAgent>, adam: AdamConfig) -> Self {
        Self {
            actor_target: actor.clone(),
            actor_opt: AdamState::new(&actor, adam),
            actor,
            critics,
            diffusion,
        }
    }

    pub fn soft_update_targets(&mut self, tau: f64) -> Result<()> {
        self.actor_target.soft_update(&self.actor, tau)?;
        self.critics.soft_update(tau)
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite()
            && self.actor_target.is_finite()
            && self.critics.is_finite()
            && self
                .diffusion
                .as_ref()
                .is_none_or(|d| d.policy.net().is_finite() && d.policy.ema().is_finite() && d.critics.is_finite())
    }
}

/// Critic seen as a function of one agent's action slot, with everything
/// else held at the batch values.
pub struct CriticView<'a> {
    pub net: &'a Mlp,
    /// Critic inputs `[joint obs, joint action]` per sample.
    pub inputs: &'a [Vec<f64>],
    /// Offset of the agent's action inside each input.
    pub offset: usize,
}

impl ActionValue for CriticView<'_> {
    fn value_and_grad(&self, k: usize, action: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut x = self.inputs[k].clone();
        x[self.offset..self.offset + action.len()].copy_from_slice(action);
        let (q, tape) = self.net.forward_with_tape(&x)?;
        let (_, g) = self.net.backward(&tape, &[1.0])?;
        Ok((q[0], g[self.offset..self.offset + action.len()].to_vec()))
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Clipped double-Q bootstrap:
/// `y = r + gamma (1 - d) min_k max_j Q_k^target(s', a_j)`.
///
/// `candidates[s]` lists the joint actions considered for sample `s`.
pub fn critic_target(
    rewards: &[f64],
    dones: &[bool],
    next_joint_obs: &[Vec<f64>],
    candidates: &[Vec<Vec<f64>>],
    targets: [&Mlp; 2],
    gamma: f64,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    check_len("done flags", n, dones.len())?;
    check_len("next observations", n, next_joint_obs.len())?;
    check_len("candidate sets", n, candidates.len())?;
    let mut y = Vec::with_capacity(n);
    for s in 0..n {
        if dones[s] {
            y.push(rewards[s]);
            continue;
        }
        if candidates[s].is_empty() {
            return Err(Error::InvalidConfig("empty candidate set".into()));
        }
        let mut best = [f64::NEG_INFINITY; 2];
        for a in &candidates[s] {
            let x = concat(&next_joint_obs[s], a);
            for (b, net) in best.iter_mut().zip(targets) {
                *b = b.max(net.forward(&x)?[0]);
            }
        }
        y.push(rewards[s] + gamma * best[0].min(best[1]));
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLosses {
    pub q1: f64,
    pub q2: f64,
    /// True when a non-finite loss or gradient stopped the update.
    pub skipped: bool,
}

/// One Adam step on each critic's mean squared error against `y`.
pub fn critic_update(pair: &mut CriticPair, inputs: &[Vec<f64>], y: &[f64]) -> Result<CriticLosses> {
    if inputs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_len("critic targets", inputs.len(), y.len())?;
    let scale = 1.0 / inputs.len() as f64;
    let mut losses = [0.0; 2];
    let mut grads = [Gradients::zeros_like(&pair.online[0]), Gradients::zeros_like(&pair.online[1])];
    for (x, target) in inputs.iter().zip(y) {
        for c in 0..2 {
            let (q, tape) = pair.online[c].forward_with_tape(x)?;
            let r = q[0] - target;
            losses[c] += r * r * scale;
            pair.online[c].backward_into(&tape, &[2.0 * r * scale], &mut grads[c])?;
        }
    }
    let out = CriticLosses {
        q1: losses[0],
        q2: losses[1],
        skipped: false,
    };
    if !losses.iter().all(|l| l.is_finite()) || !grads.iter().all(Gradients::is_finite) {
        eprintln!("warning: non-finite critic loss {losses:?}; update skipped");
        return Ok(CriticLosses { skipped: true, ..out });
    }
    for ((opt, net), g) in pair.opt.iter_mut().zip(pair.online.iter_mut()).zip(&grads) {
        opt.step(net, g)?;
    }
    Ok(out)
}

/// `-mean Q1(s, a | a_i = pi(o_i)) + bc_weight * mean ||pi(o_i) - a_diff||^2`
/// followed by one Adam step on the actor. `anchors` may be `None` only
/// when `bc_weight` is zero.
pub fn ddpg_actor_update(
    agent: &mut AgentNets,
    inputs: &[Vec<f64>],
    obs: &[&[f64]],
    offset: usize,
    anchors: Option<&[Vec<f64>]>,
    bc_weight: f64,
) -> Result<f64> {
    let n = obs.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    check_len("critic inputs", n, inputs.len())?;
    if bc_weight > 0.0 && anchors.is_none() {
        return Err(Error::InvalidConfig("cloning weight set without anchor actions".into()));
    }
    let scale = 1.0 / n as f64;
    let critic = &agent.critics.online[0];
    let mut grads = Gradients::zeros_like(&agent.actor);
    let mut loss = 0.0;
    for (k, o) in obs.iter().enumerate() {
        let (a, tape) = agent.actor.forward_with_tape(o)?;
        let view = CriticView {
            net: critic,
            inputs,
            offset,
        };
        let (q, dq) = view.value_and_grad(k, &a)?;
        loss -= q * scale;
        let mut g: Vec<f64> = dq.iter().map(|d| -d * scale).collect();
        if bc_weight > 0.0 {
            let target = &anchors.unwrap()[k];
            for ((gi, ai), ti) in g.iter_mut().zip(&a).zip(target) {
                let d = ai - ti;
                loss += bc_weight * d * d * scale;
                *gi += 2.0 * bc_weight * d * scale;
            }
        }
        agent.actor.backward_into(&tape, &g, &mut grads)?;
    }
    if !loss.is_finite() || !grads.is_finite() {
        eprintln!("warning: non-finite actor loss {loss}; update skipped");
        return Ok(loss);
    }
    agent.actor_opt.step(&mut agent.actor, &grads)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionUpdate {
    pub critic: CriticLosses,
    pub actor_loss: f64,
    pub bc_loss: f64,
    pub ema_updated: bool,
}

pub struct DiffusionStepParams {
    pub eta: f64,
    pub tau: f64,
    pub ema_interval: usize,
    pub ema_decay: f64,
}

/// Critic and noise-network step for one diffusion agent on a harvested
/// batch. Returns `None` (and changes nothing) for an empty batch.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_agent_update<R: Rng + ?Sized>(
    agent: &mut DiffusionAgent,
    inputs: &[Vec<f64>],
    y: &[f64],
    obs: &[&[f64]],
    actions: &[&[f64]],
    offset: usize,
    p: &DiffusionStepParams,
    rng: &mut R,
) -> Result<Option<DiffusionUpdate>> {
    if obs.is_empty() {
        return Ok(None);
    }
    let critic = critic_update(&mut agent.critics, inputs, y)?;
    let views = [
        CriticView {
            net: &agent.critics.online[0],
            inputs,
            offset,
        },
        CriticView {
            net: &agent.critics.online[1],
            inputs,
            offset,
        },
    ];
    let loss = diffusion_actor_loss(&agent.policy, [&views[0], &views[1]], obs, actions, p.eta, rng)?;
    let finite = loss.total.is_finite() && loss.grads.is_finite();
    if finite {
        agent.policy.apply_gradients(&loss.grads)?;
        agent.steps += 1;
    } else {
        eprintln!("warning: non-finite diffusion loss {}; update skipped", loss.total);
    }
    let ema_updated = finite && agent.steps.is_multiple_of(p.ema_interval as u64);
    if ema_updated {
        agent.policy.update_ema(p.ema_decay)?;
    }
    agent.critics.soft_update(p.tau)?;
    Ok(Some(DiffusionUpdate {
        critic,
        actor_loss: loss.total,
        bc_loss: loss.bc,
        ema_updated,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn constant_net(input: usize, value: f64) -> Mlp {
        let mut net = Mlp::zeros(&[input, 1], Activation::Relu, Activation::Identity).unwrap();
        *net.params_mut().last().unwrap() = value;
        net
    }

    #[test]
    fn assignment_examples() {
        let t1 = [Vec3::zeros()];
        let a2 = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        assert_eq!(assign_targets(&a2, &t1).unwrap(), vec![0, 0]);

        let t2 = [Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        let a4 = [
            Vec3::new(-1.0, 0.5, 0.0),
            Vec3::new(1.0, 0.5, 0.0),
            Vec3::new(-1.0, -0.5, 0.0),
            Vec3::new(1.0, -0.5, 0.0),
        ];
        assert_eq!(assign_targets(&a4, &t2).unwrap(), vec![0, 1, 0, 1]);

        // All eight AUVs closest to target 0.
        let t3 = [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let a8: Vec<Vec3> = (0..8).map(|i| Vec3::new(-0.1 * i as f64, -0.1, 0.0)).collect();
        let asg = assign_targets(&a8, &t3).unwrap();
        let mut sizes = [0; 3];
        for t in asg {
            sizes[t] += 1;
        }
        sizes.sort();
        assert_eq!(sizes, [2, 3, 3]);

        assert!(assign_targets(&a2, &[]).is_err());
        assert!(assign_targets(&a2[..1], &t2).is_err());
    }

    #[test]
    fn terminal_target_is_reward() {
        let q1 = constant_net(3, 10.0);
        let q2 = constant_net(3, -4.0);
        let y = critic_target(&[0.7], &[true], &[vec![0.0; 2]], &[vec![vec![1.0]]], [&q1, &q2], 0.95).unwrap();
        assert_eq!(y, vec![0.7]);
    }

    #[test]
    fn min_over_critics_of_max_over_candidates() {
        // Q1 = a, Q2 = a + 1, both linear in the single action input.
        let mut q1 = Mlp::zeros(&[1, 1], Activation::Identity, Activation::Identity).unwrap();
        if let Some(w) = q1.params_mut().next() {
            *w = 1.0;
        }
        let mut q2 = q1.clone();
        *q2.params_mut().last().unwrap() = 1.0;
        let cands = vec![vec![vec![2.0], vec![0.5], vec![-1.0]]];
        let y = critic_target(&[1.0], &[false], &[vec![]], &cands, [&q1, &q2], 0.95).unwrap();
        // critic-1 max = 2, critic-2 max = 3
        assert!((y[0] - 2.9).abs() < 1e-12);
    }

    #[test]
    fn equal_prediction_gives_zero_loss() {
        let q = constant_net(2, 1.5);
        let mut pair = CriticPair::new(q.clone(), q.clone(), AdamConfig::default());
        let inputs = vec![vec![0.1, 0.2], vec![0.3, 0.4]];
        let l = critic_update(&mut pair, &inputs, &[1.5, 1.5]).unwrap();
        assert_eq!((l.q1, l.q2), (0.0, 0.0));
        assert_eq!(pair.online[0], q);

        let mut pair = CriticPair::new(q.clone(), q, AdamConfig::default());
        let l = critic_update(&mut pair, &inputs, &[0.5, 0.5]).unwrap();
        assert!((l.q1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nan_target_skips_update() {
        let q = constant_net(2, 1.5);
        let mut pair = CriticPair::new(q.clone(), q.clone(), AdamConfig::default());
        let l = critic_update(&mut pair, &[vec![0.0, 0.0]], &[f64::NAN]).unwrap();
        assert!(l.skipped);
        assert_eq!(pair.online[0], q);
    }
}
