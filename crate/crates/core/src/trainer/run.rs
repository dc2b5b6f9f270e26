use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::agents::{
    critic_target, critic_update, ddpg_actor_update, diffusion_agent_update, AgentNets, CriticPair,
    DiffusionAgent, DiffusionStepParams,
};
use super::config::{Algo, TrainConfig};
use crate::diffusion::{make_schedule, DiffusionPolicy, NoiseSchedule};
use crate::env::{Env, ScenarioConfig, ACTION_DIM};
use crate::error::{Error, Result};
use crate::experience::{
    harvest_episode, to_action, ReplayBuffer, Schema, SourceFilter, Transition, SOURCE_LIVE,
};
use crate::nn::{checkpoint, Activation, Mlp};

/// Distance under which an AUV counts as tracking its target.
pub const TRACKING_THRESHOLD: f64 = 0.08;

/// Independent random streams, so that switching a component off never
/// shifts the draws seen by the others.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Env = 1,
    Explore = 2,
    Init = 3,
    DiffusionInit = 4,
    Harvest = 5,
    Batch = 6,
    Diffusion = 7,
    Eval = 8,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Per-episode training summary, one JSONL line each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub episode: usize,
    pub mean_reward_per_agent: Vec<f64>,
    pub mean_reward: f64,
    pub tracking_accuracy: f64,
    pub harvested_count: usize,
    pub update_cycles: usize,
    pub critic_losses: Option<[f64; 2]>,
    pub actor_loss: Option<f64>,
    pub diffusion_loss: Option<f64>,
    pub buffer_sizes_by_source: [usize; 2],
}

#[derive(Debug, Default)]
struct CycleStats {
    critic: [f64; 2],
    actor: f64,
    diffusion: Option<f64>,
}

pub struct Trainer {
    config: TrainConfig,
    scenario: ScenarioConfig,
    env: Env,
    harvest_env: Env,
    agents: Vec<AgentNets>,
    buffer: ReplayBuffer,
    rng_env: ChaCha8Rng,
    rng_explore: ChaCha8Rng,
    rng_harvest: ChaCha8Rng,
    rng_batch: ChaCha8Rng,
    rng_diffusion: ChaCha8Rng,
    total_steps: u64,
    update_cycles: u64,
    episodes_done: usize,
}

fn noise_schedule(c: &TrainConfig) -> Result<NoiseSchedule> {
    match (c.beta_min, c.beta_max) {
        (Some(lo), Some(hi)) => make_schedule(c.diffusion_steps, lo, hi),
        _ => NoiseSchedule::with_default_bounds(c.diffusion_steps),
    }
}

impl Trainer {
    /// `with_diffusion` decides whether diffusion agents exist at all; the
    /// config decides whether they are used.
    pub fn new(config: TrainConfig, scenario: ScenarioConfig, with_diffusion: bool) -> Result<Self> {
        config.validate()?;
        scenario.validate()?;
        let seed = config.seed;
        let mut rng_env = stream_rng(seed, Stream::Env);
        let env = Env::new(scenario.clone(), config.episode_len, rng_env.random())?;
        let harvest_env = env.clone();
        let n = env.n_agents();
        let obs_dim = env.obs_dim();
        let critic_in = n * (obs_dim + ACTION_DIM);
        let h = config.hidden;

        let mut init = stream_rng(seed, Stream::Init);
        let mut dinit = stream_rng(seed, Stream::DiffusionInit);
        let mut agents = Vec::with_capacity(n);
        for _ in 0..n {
            let actor = Mlp::new(&[obs_dim, h, h, ACTION_DIM], Activation::Relu, Activation::Tanh, &mut init)?;
            let q1 = Mlp::new(&[critic_in, h, h, 1], Activation::Relu, Activation::Identity, &mut init)?;
            let q2 = Mlp::new(&[critic_in, h, h, 1], Activation::Relu, Activation::Identity, &mut init)?;
            let critics = CriticPair::new(q1, q2, config.adam);
            let diffusion = if with_diffusion {
                let policy = DiffusionPolicy::new(obs_dim, ACTION_DIM, h, noise_schedule(&config)?, config.adam, &mut dinit)?;
                let q1 = Mlp::new(&[critic_in, h, h, 1], Activation::Relu, Activation::Identity, &mut dinit)?;
                let q2 = Mlp::new(&[critic_in, h, h, 1], Activation::Relu, Activation::Identity, &mut dinit)?;
                let critics = CriticPair::new(q1, q2, config.adam);
                Some(DiffusionAgent {
                    policy,
                    critics,
                    steps: 0,
                })
            } else {
                None
            };
            agents.push(AgentNets::new(actor, critics, diffusion, config.adam));
        }
        let buffer = ReplayBuffer::new(
            Schema {
                n_agents: n,
                obs_dim,
                action_dim: ACTION_DIM,
            },
            config.buffer_capacity,
        )?;
        Ok(Self {
            rng_env,
            rng_explore: stream_rng(seed, Stream::Explore),
            rng_harvest: stream_rng(seed, Stream::Harvest),
            rng_batch: stream_rng(seed, Stream::Batch),
            rng_diffusion: stream_rng(seed, Stream::Diffusion),
            config,
            scenario,
            env,
            harvest_env,
            agents,
            buffer,
            total_steps: 0,
            update_cycles: 0,
            episodes_done: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn agents(&self) -> &[AgentNets] {
        &self.agents
    }

    pub fn into_agents(self) -> Vec<AgentNets> {
        self.agents
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn update_cycles(&self) -> u64 {
        self.update_cycles
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    /// Runs the next training episode: reset, harvest, interact and update.
    pub fn run_episode(&mut self) -> Result<TrainRecord> {
        let episode = self.episodes_done;
        let c = self.config.clone();
        let n = self.agents.len();
        self.env.reset(self.rng_env.random())?;

        let mut harvested = 0;
        if c.harvest {
            self.harvest_env.reset(self.rng_harvest.random())?;
            let agents = &self.agents;
            let stats = harvest_episode(
                &mut self.harvest_env,
                |obs: &[Vec<f64>]| agents.iter().zip(obs).map(|(a, o)| a.actor.forward(o)).collect(),
                &self.scenario.quality,
                &mut self.buffer,
                c.episode_len,
                c.harvest_sigma,
                &mut self.rng_harvest,
            )?;
            harvested = stats.harvested;
        }

        let explore = Normal::new(0.0, c.explore_sigma)
            .map_err(|_| Error::InvalidConfig("bad exploration sigma".into()))?;
        let bc_weight = c.bc_weight(episode);
        let mut obs: Vec<Vec<f64>> = self.env.observations().into_iter().map(|o| o.values).collect();
        let mut reward_sums = vec![0.0; n];
        let mut tracked = 0usize;
        let mut steps = 0usize;
        let mut cycles: Vec<CycleStats> = Vec::new();

        for _ in 0..c.episode_len {
            let mut actions = Vec::with_capacity(n);
            for (agent, o) in self.agents.iter().zip(&obs) {
                let mut a = agent.actor.forward(o)?;
                for x in a.iter_mut() {
                    *x = (*x + explore.sample(&mut self.rng_explore)).clamp(-1.0, 1.0);
                }
                actions.push(a);
            }
            let joint: Vec<[f64; ACTION_DIM]> = actions.iter().map(|a| to_action(a)).collect::<Result<_>>()?;
            let out = self.env.step(&joint)?;
            let next: Vec<Vec<f64>> = out.observations.into_iter().map(|o| o.values).collect();
            for (s, r) in reward_sums.iter_mut().zip(&out.rewards) {
                *s += r;
            }
            let world = self.env.world();
            tracked += self
                .env
                .assignment()
                .iter()
                .enumerate()
                .filter(|(i, &t)| (world.auvs[*i].position - world.targets[t].position).norm() < TRACKING_THRESHOLD)
                .count();
            steps += 1;
            self.buffer.push(Transition {
                obs: std::mem::replace(&mut obs, next.clone()),
                actions,
                rewards: out.rewards,
                next_obs: next,
                done: out.done,
                source: SOURCE_LIVE,
            })?;
            self.total_steps += 1;
            if self.buffer.len() >= c.warmup && self.total_steps.is_multiple_of(c.update_interval as u64) {
                for _ in 0..c.updates_per_cycle {
                    cycles.push(self.update_cycle(bc_weight)?);
                }
            }
            if out.done {
                break;
            }
        }
        self.episodes_done += 1;

        let mean = |f: &dyn Fn(&CycleStats) -> f64| cycles.iter().map(f).sum::<f64>() / cycles.len() as f64;
        let diffusion: Vec<f64> = cycles.iter().filter_map(|s| s.diffusion).collect();
        let per_agent: Vec<f64> = reward_sums.iter().map(|s| s / steps as f64).collect();
        Ok(TrainRecord {
            episode,
            mean_reward: per_agent.iter().sum::<f64>() / n as f64,
            mean_reward_per_agent: per_agent,
            tracking_accuracy: tracked as f64 / (steps * n) as f64,
            harvested_count: harvested,
            update_cycles: cycles.len(),
            critic_losses: (!cycles.is_empty()).then(|| [mean(&|s| s.critic[0]), mean(&|s| s.critic[1])]),
            actor_loss: (!cycles.is_empty()).then(|| mean(&|s| s.actor)),
            diffusion_loss: (!diffusion.is_empty()).then(|| diffusion.iter().sum::<f64>() / diffusion.len() as f64),
            buffer_sizes_by_source: self.buffer.counts(),
        })
    }

    /// Joint next actions for the bootstrap: the target actors' action
    /// first, then EMA diffusion samples.
    fn candidates(&mut self, next_obs: &[&[Vec<f64>]]) -> Result<Vec<Vec<Vec<f64>>>> {
        let extra = if self.agents.iter().all(|a| a.diffusion.is_some()) {
            self.config.n_candidates - 1
        } else {
            0
        };
        let mut out = Vec::with_capacity(next_obs.len());
        for obs in next_obs {
            let mut set = Vec::with_capacity(1 + extra);
            let mut joint = Vec::with_capacity(obs.len() * ACTION_DIM);
            for (a, o) in self.agents.iter().zip(obs.iter()) {
                joint.extend(a.actor_target.forward(o)?);
            }
            set.push(joint);
            for _ in 0..extra {
                let mut joint = Vec::with_capacity(obs.len() * ACTION_DIM);
                for (a, o) in self.agents.iter().zip(obs.iter()) {
                    let d = a.diffusion.as_ref().unwrap();
                    joint.extend(d.policy.sample_action(o, &mut self.rng_diffusion, true)?);
                }
                set.push(joint);
            }
            out.push(set);
        }
        Ok(out)
    }

    fn update_cycle(&mut self, bc_weight: f64) -> Result<CycleStats> {
        let c = self.config.clone();
        let n = self.agents.len();
        let obs_dim = self.buffer.schema().obs_dim;
        let joint_obs_len = n * obs_dim;
        let batch: Vec<Transition> = self
            .buffer
            .sample(c.batch_size, SourceFilter::Any, &mut self.rng_batch)?
            .into_iter()
            .cloned()
            .collect();
        let inputs: Vec<Vec<f64>> = batch.iter().map(|t| [t.joint_obs(), t.joint_action()].concat()).collect();
        let next_joint: Vec<Vec<f64>> = batch.iter().map(Transition::joint_next_obs).collect();
        let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();
        let next_refs: Vec<&[Vec<f64>]> = batch.iter().map(|t| t.next_obs.as_slice()).collect();
        let cands = self.candidates(&next_refs)?;

        let mut stats = CycleStats::default();
        for i in 0..n {
            let rewards: Vec<f64> = batch.iter().map(|t| t.rewards[i]).collect();
            let agent = &self.agents[i];
            let y = critic_target(
                &rewards,
                &dones,
                &next_joint,
                &cands,
                [&agent.critics.target[0], &agent.critics.target[1]],
                c.gamma,
            )?;
            let agent = &mut self.agents[i];
            let l = critic_update(&mut agent.critics, &inputs, &y)?;
            stats.critic[0] += l.q1 / n as f64;
            stats.critic[1] += l.q2 / n as f64;

            let obs_i: Vec<&[f64]> = batch.iter().map(|t| t.obs[i].as_slice()).collect();
            let anchors = match (&agent.diffusion, bc_weight > 0.0) {
                (Some(d), true) => Some(
                    obs_i
                        .iter()
                        .map(|o| d.policy.sample_action(o, &mut self.rng_diffusion, true))
                        .collect::<Result<Vec<_>>>()?,
                ),
                _ => None,
            };
            let w = if anchors.is_some() { bc_weight } else { 0.0 };
            let loss = ddpg_actor_update(agent, &inputs, &obs_i, joint_obs_len + i * ACTION_DIM, anchors.as_deref(), w)?;
            stats.actor += loss / n as f64;
        }

        let harvested = self.buffer.counts()[1];
        if c.diffusion_updates && harvested > 0 && self.agents.iter().all(|a| a.diffusion.is_some()) {
            let size = c.batch_size.min(harvested);
            let batch1: Vec<Transition> = self
                .buffer
                .sample(size, SourceFilter::Only1, &mut self.rng_diffusion)?
                .into_iter()
                .cloned()
                .collect();
            let inputs1: Vec<Vec<f64>> = batch1.iter().map(|t| [t.joint_obs(), t.joint_action()].concat()).collect();
            let next1: Vec<Vec<f64>> = batch1.iter().map(Transition::joint_next_obs).collect();
            let dones1: Vec<bool> = batch1.iter().map(|t| t.done).collect();
            let next_refs1: Vec<&[Vec<f64>]> = batch1.iter().map(|t| t.next_obs.as_slice()).collect();
            let cands1 = self.candidates(&next_refs1)?;
            let params = DiffusionStepParams {
                eta: c.eta,
                tau: c.tau,
                ema_interval: c.ema_interval,
                ema_decay: c.ema_decay,
            };
            let mut total = 0.0;
            for i in 0..n {
                let rewards: Vec<f64> = batch1.iter().map(|t| t.rewards[i]).collect();
                let d = self.agents[i].diffusion.as_mut().unwrap();
                let y = critic_target(
                    &rewards,
                    &dones1,
                    &next1,
                    &cands1,
                    [&d.critics.target[0], &d.critics.target[1]],
                    c.gamma,
                )?;
                let obs_i: Vec<&[f64]> = batch1.iter().map(|t| t.obs[i].as_slice()).collect();
                let act_i: Vec<&[f64]> = batch1.iter().map(|t| t.actions[i].as_slice()).collect();
                let offset = joint_obs_len + i * ACTION_DIM;
                if let Some(u) =
                    diffusion_agent_update(d, &inputs1, &y, &obs_i, &act_i, offset, &params, &mut self.rng_diffusion)?
                {
                    total += u.actor_loss / n as f64;
                }
            }
            stats.diffusion = Some(total);
        }

        for agent in &mut self.agents {
            agent.soft_update_targets(c.tau)?;
        }
        self.update_cycles += 1;
        if !self.agents.iter().all(AgentNets::is_finite) {
            return Err(Error::NonFinite("network parameters after update"));
        }
        Ok(stats)
    }

    /// Writes every agent's networks under `dir/agent<i>/`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        save_agents(&self.agents, dir)
    }
}

pub fn save_agents(agents: &[AgentNets], dir: &Path) -> Result<()> {
    for (i, a) in agents.iter().enumerate() {
        let d = dir.join(format!("agent{i}"));
        std::fs::create_dir_all(&d)?;
        checkpoint::save(&a.actor, &d.join("actor.sdam"))?;
        checkpoint::save(&a.critics.online[0], &d.join("critic1.sdam"))?;
        checkpoint::save(&a.critics.online[1], &d.join("critic2.sdam"))?;
        if let Some(diff) = &a.diffusion {
            diff.policy.save(&d.join("diffusion.sddp"))?;
        }
    }
    Ok(())
}

/// Loads the acting networks written by [`save_agents`].
pub fn load_actors(dir: &Path, n_agents: usize) -> Result<Vec<Mlp>> {
    (0..n_agents)
        .map(|i| checkpoint::load(&dir.join(format!("agent{i}")).join("actor.sdam")))
        .collect()
}

pub struct TrainOutcome {
    pub agents: Vec<AgentNets>,
    pub records: Vec<TrainRecord>,
    /// Wall-clock seconds per episode.
    pub wall_times: Vec<f64>,
}

/// Full training run. `on_record` sees each episode record with its wall
/// time. If the run aborts and `abort_dir` is given, the current networks
/// are checkpointed there first.
pub fn train_with(
    config: TrainConfig,
    scenario: ScenarioConfig,
    with_diffusion: bool,
    abort_dir: Option<&Path>,
    mut on_record: impl FnMut(&TrainRecord, f64) -> Result<()>,
) -> Result<TrainOutcome> {
    let episodes = config.episodes;
    let mut trainer = Trainer::new(config, scenario, with_diffusion)?;
    let mut records = Vec::with_capacity(episodes);
    let mut wall_times = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let start = Instant::now();
        match trainer.run_episode() {
            Ok(r) => {
                let dt = start.elapsed().as_secs_f64();
                on_record(&r, dt)?;
                records.push(r);
                wall_times.push(dt);
            }
            Err(e) => {
                if let Some(dir) = abort_dir {
                    trainer.save_checkpoint(dir)?;
                }
                return Err(e);
            }
        }
    }
    Ok(TrainOutcome {
        agents: trainer.into_agents(),
        records,
        wall_times,
    })
}

pub fn train(config: TrainConfig, scenario: ScenarioConfig) -> Result<TrainOutcome> {
    train_with(config, scenario, true, None, |_, _| Ok(()))
}

/// Centralized-critic DDPG: the same loop with every diffusion component
/// removed.
pub fn train_baseline_maddpg(config: TrainConfig, scenario: ScenarioConfig) -> Result<TrainOutcome> {
    train_with(config.for_algo(Algo::Maddpg), scenario, false, None, |_, _| Ok(()))
}

/// Config and diffusion switch for an algorithm.
pub fn algo_setup(config: TrainConfig, algo: Algo) -> (TrainConfig, bool) {
    (config.for_algo(algo), algo != Algo::Maddpg)
}
