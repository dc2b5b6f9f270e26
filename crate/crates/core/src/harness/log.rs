use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::env::{Env, ACTION_DIM};
use crate::error::{Error, Result};
use crate::experience::to_action;
use crate::nn::Mlp;

/// One trajectory log line. Step 0 is the reset state and carries no
/// rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    pub auv_positions: Vec<[f64; 3]>,
    pub auv_velocities: Vec<[f64; 3]>,
    pub target_positions: Vec<[f64; 3]>,
    pub target_velocities: Vec<[f64; 3]>,
    pub assignment: Vec<usize>,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub episode_len: usize,
    pub dt: f64,
    pub records: Vec<StepRecord>,
}

fn snapshot(env: &Env, episode: usize, rewards: Vec<f64>) -> StepRecord {
    let w = env.world();
    let arr = |v: &crate::env::Vec3| [v.x, v.y, v.z];
    StepRecord {
        episode,
        step: w.step,
        auv_positions: w.auvs.iter().map(|b| arr(&b.position)).collect(),
        auv_velocities: w.auvs.iter().map(|b| arr(&b.velocity)).collect(),
        target_positions: w.targets.iter().map(|b| arr(&b.position)).collect(),
        target_velocities: w.targets.iter().map(|b| arr(&b.velocity)).collect(),
        assignment: env.assignment().to_vec(),
        rewards,
    }
}

/// Deterministic rollout of frozen actors from a reset with `seed`.
pub fn rollout_episode(env: &mut Env, actors: &[Mlp], episode: usize, seed: u64) -> Result<EpisodeLog> {
    let mut obs = env.reset(seed)?;
    let mut records = vec![snapshot(env, episode, Vec::new())];
    loop {
        let joint: Vec<[f64; ACTION_DIM]> = actors
            .iter()
            .zip(&obs)
            .map(|(a, o)| to_action(&a.forward(&o.values)?))
            .collect::<Result<_>>()?;
        let out = env.step(&joint)?;
        records.push(snapshot(env, episode, out.rewards));
        obs = out.observations;
        if out.done {
            break;
        }
    }
    Ok(EpisodeLog {
        episode,
        episode_len: env.episode_len(),
        dt: env.scenario().fluid.dt,
        records,
    })
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

impl EpisodeLog {
    pub fn check_complete(&self) -> Result<()> {
        let expected = self.episode_len + 1;
        if self.records.len() != expected {
            return Err(Error::TruncatedLog {
                expected,
                got: self.records.len(),
            });
        }
        Ok(())
    }
}
