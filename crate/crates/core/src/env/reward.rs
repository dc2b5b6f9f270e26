//! Composite per-AUV reward: target pursuit, inter-AUV spacing and obstacle
//! clearance.

use super::params::RewardParams;
use super::world::WorldState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub position: f64,
    pub collision: f64,
    pub obstacle: f64,
    pub total: f64,
}

/// Linear inside the proximity zone, `-d_t` outside; continuous at the
/// margin where both branches equal `-margin`.
pub fn position_reward(d_t: f64, p: &RewardParams) -> f64 {
    let w = p.proximity_modulator;
    if d_t <= p.target_margin {
        w * d_t - (w + 1.0) * p.target_margin
    } else {
        -d_t
    }
}

/// `d_a - margin` when too close, `-d_a` otherwise. With no neighbour
/// (`d_a` infinite) the term is zero.
pub fn collision_reward(d_a: f64, p: &RewardParams) -> f64 {
    if !d_a.is_finite() {
        0.0
    } else if d_a < p.auv_margin {
        d_a - p.auv_margin
    } else {
        -d_a
    }
}

pub fn obstacle_reward(d_l: f64, p: &RewardParams) -> f64 {
    if d_l < p.obstacle_margin {
        -p.obstacle_penalty
    } else {
        0.0
    }
}

pub fn reward_from_distances(d_t: f64, d_a: f64, d_l: f64, p: &RewardParams) -> RewardBreakdown {
    let position = position_reward(d_t, p);
    let collision = collision_reward(d_a, p);
    let obstacle = obstacle_reward(d_l, p);
    RewardBreakdown {
        position,
        collision,
        obstacle,
        total: p.position_weight * position
            + p.collision_weight * collision
            + p.obstacle_weight * obstacle,
    }
}

/// Distances `(d_t, d_a, d_l)` for `agent` tracking `target`.
pub fn distances(world: &WorldState, agent: usize, target: usize) -> (f64, f64, f64) {
    let p = world.auvs[agent].position;
    let d_t = (p - world.targets[target].position).norm();
    let d_a = world
        .auvs
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != agent)
        .map(|(_, b)| (p - b.position).norm())
        .fold(f64::INFINITY, f64::min);
    let d_l = world
        .obstacles
        .iter()
        .map(|o| (p - o.center()).norm())
        .fold(f64::INFINITY, f64::min);
    (d_t, d_a, d_l)
}

pub fn reward(world: &WorldState, agent: usize, target: usize, p: &RewardParams) -> RewardBreakdown {
    let (d_t, d_a, d_l) = distances(world, agent, target);
    reward_from_distances(d_t, d_a, d_l, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn only_position(w: f64, margin: f64) -> RewardParams {
        RewardParams {
            position_weight: 1.0,
            collision_weight: 0.0,
            obstacle_weight: 0.0,
            proximity_modulator: w,
            target_margin: margin,
            ..RewardParams::default()
        }
    }

    #[test]
    fn position_branches_meet_at_margin() {
        for (w, m) in [(2.0, 0.032), (1.5, 0.1), (7.0, 0.3)] {
            let p = only_position(w, m);
            let inner = w * m - (w + 1.0) * m;
            assert!((inner - (-m)).abs() < 1e-12);
            assert!((position_reward(m, &p) + m).abs() < 1e-12);
        }
    }

    #[test]
    fn inner_zone_example() {
        let p = only_position(2.0, 0.1);
        let r = reward_from_distances(0.05, f64::INFINITY, f64::INFINITY, &p);
        assert!((r.total - (-0.2)).abs() < 1e-15);
    }

    #[test]
    fn collision_term_jumps_at_margin() {
        let p = RewardParams::default();
        let left = collision_reward(p.auv_margin - 1e-12, &p);
        let right = collision_reward(p.auv_margin, &p);
        assert!(left.abs() < 1e-11);
        assert_eq!(right, -p.auv_margin);
        assert_eq!(collision_reward(f64::INFINITY, &p), 0.0);
    }

    #[test]
    fn obstacle_penalty_is_binary() {
        let p = RewardParams {
            position_weight: 0.0,
            collision_weight: 0.0,
            obstacle_weight: 1.0,
            obstacle_penalty: 5.0,
            ..RewardParams::default()
        };
        let m = p.obstacle_margin;
        assert_eq!(reward_from_distances(1.0, 1.0, m - 1e-9, &p).total, -5.0);
        assert_eq!(reward_from_distances(1.0, 1.0, m, &p).total, 0.0);
    }
}
