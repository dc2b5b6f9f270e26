use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::buffer::{ReplayBuffer, Transition, SOURCE_HARVESTED};
use super::quality::{assess_quality, QualityParams};
use crate::env::{Env, ACTION_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HarvestStats {
    pub steps: usize,
    pub harvested: usize,
}

/// Rolls out `policy` with Gaussian exploration for up to `horizon` steps
/// and stores every step on which enough agents made a quality move.
///
/// `policy` maps the per-agent observations to per-agent actions. The
/// environment must already be reset.
pub fn harvest_episode<R, P>(
    env: &mut Env,
    mut policy: P,
    q: &QualityParams,
    buffer: &mut ReplayBuffer,
    horizon: usize,
    sigma_explore: f64,
    rng: &mut R,
) -> Result<HarvestStats>
where
    R: Rng + ?Sized,
    P: FnMut(&[Vec<f64>]) -> Result<Vec<Vec<f64>>>,
{
    if horizon == 0 {
        return Err(Error::InvalidConfig("harvest horizon must be at least 1".into()));
    }
    let noise = Normal::new(0.0, sigma_explore)
        .map_err(|_| Error::InvalidConfig(format!("bad exploration sigma {sigma_explore}")))?;
    let n = env.n_agents();
    let gate = q.gate(n);
    let mut obs: Vec<Vec<f64>> = env.observations().into_iter().map(|o| o.values).collect();
    let mut stats = HarvestStats::default();

    while stats.steps < horizon && env.world().step < env.episode_len() {
        let mut actions = policy(&obs)?;
        for a in &mut actions {
            for x in a.iter_mut() {
                *x = (*x + noise.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        let prev: Vec<_> = env.world().auvs.iter().map(|b| b.position).collect();
        let targets = env.assigned_target_positions();
        let joint: Vec<[f64; ACTION_DIM]> = actions.iter().map(|a| to_action(a)).collect::<Result<_>>()?;
        let out = env.step(&joint)?;
        let next: Vec<Vec<f64>> = out.observations.into_iter().map(|o| o.values).collect();

        let valid = (0..n)
            .filter(|&i| assess_quality(&prev[i], &env.world().auvs[i].position, &targets[i], q))
            .count();
        if valid >= gate {
            buffer.push(Transition {
                obs: obs.clone(),
                actions,
                rewards: out.rewards,
                next_obs: next.clone(),
                done: out.done,
                source: SOURCE_HARVESTED,
            })?;
            stats.harvested += 1;
        }
        stats.steps += 1;
        obs = next;
        if out.done {
            break;
        }
    }
    Ok(stats)
}

pub(crate) fn to_action(a: &[f64]) -> Result<[f64; ACTION_DIM]> {
    a.try_into().map_err(|_| Error::DimensionMismatch {
        what: "agent action",
        expected: ACTION_DIM,
        got: a.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{presets, CurrentField};
    use crate::experience::{Schema, SourceFilter};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env() -> Env {
        let mut s = presets::preset("auv2_tgt1").unwrap();
        s.obstacles.clear();
        s.current = CurrentField::still();
        s.world.target_speed = 0.0;
        Env::new(s, 40, 5).unwrap()
    }

    fn buffer(env: &Env) -> ReplayBuffer {
        ReplayBuffer::new(
            Schema {
                n_agents: env.n_agents(),
                obs_dim: env.obs_dim(),
                action_dim: ACTION_DIM,
            },
            1000,
        )
        .unwrap()
    }

    #[test]
    fn stationary_agents_harvest_nothing() {
        let mut env = env();
        let mut buf = buffer(&env);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stats = harvest_episode(
            &mut env,
            |o: &[Vec<f64>]| Ok(vec![vec![0.0; 3]; o.len()]),
            &QualityParams::default(),
            &mut buf,
            40,
            0.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(stats, HarvestStats { steps: 40, harvested: 0 });
        assert!(buf.is_empty());
    }

    #[test]
    fn pursuit_controller_harvests_every_approach_step() {
        let mut env = env();
        let mut buf = buffer(&env);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Thrust toward the assigned target, which is always the first slot.
        let pursue = |o: &[Vec<f64>]| {
            Ok(o.iter()
                .map(|v| {
                    let rel = &v[6..9];
                    let n = rel.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    rel.iter().map(|x| x / n).collect()
                })
                .collect())
        };
        // Short horizon: the approach stays well clear of the target, so no overshoot.
        let stats = harvest_episode(&mut env, pursue, &QualityParams::default(), &mut buf, 20, 0.0, &mut rng).unwrap();
        assert_eq!(stats, HarvestStats { steps: 20, harvested: 20 });
        assert_eq!(buf.counts(), [0, 20]);
        assert!(buf.sample(20, SourceFilter::Only1, &mut rng).is_ok());
    }
}
