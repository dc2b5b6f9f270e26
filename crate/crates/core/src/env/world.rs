//! World state, episode lifecycle and observation construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::CurrentField;
use super::physics::{collision_force, hydro_force, is_detected, Vec3};
use super::reward::{reward, RewardBreakdown};
use super::scenario::ScenarioConfig;
use super::SonarParams;
use crate::error::{Error, Result};
use crate::trainer::assign_targets;

/// Point mass with position and velocity in normalized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl Body {
    pub fn at(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub position: [f64; 3],
    pub radius: f64,
}

impl Obstacle {
    pub fn center(&self) -> Vec3 {
        Vec3::from(self.position)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub auvs: Vec<Body>,
    pub targets: Vec<Body>,
    pub obstacles: Vec<Obstacle>,
    pub current: CurrentField,
    pub step: usize,
    /// Vehicle-minus-flow velocity from the previous step, used for the
    /// virtual-mass finite difference.
    pub prev_rel_velocity: Vec<Vec3>,
}

impl WorldState {
    pub fn new(auvs: Vec<Body>, targets: Vec<Body>, obstacles: Vec<Obstacle>, current: CurrentField) -> Self {
        let prev_rel_velocity = auvs
            .iter()
            .map(|b| b.velocity - current_velocity(&current, &b.position))
            .collect();
        Self {
            auvs,
            targets,
            obstacles,
            current,
            step: 0,
            prev_rel_velocity,
        }
    }

    fn check_finite(&self) -> Result<()> {
        let bad = |what: &str, i: usize, b: &Body| {
            (!(b.position.iter().all(|x| x.is_finite()) && b.velocity.iter().all(|x| x.is_finite())))
                .then(|| format!("{what} {i}: p={:?} v={:?}", b.position, b.velocity))
        };
        let detail = self
            .auvs
            .iter()
            .enumerate()
            .find_map(|(i, b)| bad("auv", i, b))
            .or_else(|| {
                self.targets
                    .iter()
                    .enumerate()
                    .find_map(|(i, b)| bad("target", i, b))
            });
        match detail {
            Some(detail) => Err(Error::NonFiniteState {
                step: self.step,
                detail,
            }),
            None => Ok(()),
        }
    }
}

/// Flow velocity of the current at `p`.
pub fn current_velocity(field: &CurrentField, p: &Vec3) -> Vec3 {
    let c = Vec3::from(field.vortex_center);
    let dx = p.x - c.x;
    let dy = p.y - c.y;
    let scale = field.vortex_strength / (dx * dx + dy * dy + field.vortex_core * field.vortex_core);
    Vec3::from(field.uniform) + Vec3::new(-dy * scale, dx * scale, 0.0)
}

/// Fixed-length observation layout: ego state, then relative positions of
/// targets (assigned target first), neighbouring AUVs and landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsLayout {
    pub n_targets: usize,
    pub n_neighbors: usize,
    pub n_landmarks: usize,
}

impl ObsLayout {
    pub fn len(&self) -> usize {
        6 + 3 * (self.n_targets + self.n_neighbors + self.n_landmarks)
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub layout: ObsLayout,
    pub values: Vec<f64>,
}

impl Observation {
    pub fn ego(&self) -> &[f64] {
        &self.values[..6]
    }

    fn slot(&self, offset: usize) -> [f64; 3] {
        let s = 6 + 3 * offset;
        [self.values[s], self.values[s + 1], self.values[s + 2]]
    }

    pub fn target(&self, k: usize) -> [f64; 3] {
        self.slot(k)
    }

    pub fn neighbor(&self, j: usize) -> [f64; 3] {
        self.slot(self.layout.n_targets + j)
    }

    pub fn landmark(&self, k: usize) -> [f64; 3] {
        self.slot(self.layout.n_targets + self.layout.n_neighbors + k)
    }
}

/// Sonar-gated observation for `agent`; undetected entities read as zeros.
pub fn observe(
    world: &WorldState,
    agent: usize,
    assigned_target: usize,
    sonar: &SonarParams,
    world_scale_m: f64,
) -> Observation {
    let layout = ObsLayout {
        n_targets: world.targets.len(),
        n_neighbors: world.auvs.len() - 1,
        n_landmarks: world.obstacles.len(),
    };
    let me = &world.auvs[agent];
    let mut values = Vec::with_capacity(layout.len());
    values.extend(me.position.iter());
    values.extend(me.velocity.iter());
    let mut push_rel = |other: Vec3| {
        let rel = other - me.position;
        if is_detected(sonar, rel.norm() * world_scale_m) {
            values.extend(rel.iter());
        } else {
            values.extend([0.0; 3]);
        }
    };
    let target_order = std::iter::once(assigned_target)
        .chain((0..world.targets.len()).filter(|&k| k != assigned_target));
    for k in target_order {
        push_rel(world.targets[k].position);
    }
    for (j, b) in world.auvs.iter().enumerate() {
        if j != agent {
            push_rel(b.position);
        }
    }
    for o in &world.obstacles {
        push_rel(o.center());
    }
    Observation { layout, values }
}

/// Places targets, obstacles and the AUV ring for a new episode.
pub fn reset_world(scenario: &ScenarioConfig, seed: u64) -> Result<WorldState> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = &scenario.world;

    let targets: Vec<Body> = (0..scenario.n_targets)
        .map(|_| {
            let h = w.target_spawn_half_width;
            let p = Vec3::new(
                rng.random_range(-h..=h),
                rng.random_range(-h..=h),
                rng.random_range(-h..=h),
            );
            Body {
                position: p,
                velocity: random_unit(&mut rng) * w.target_speed,
            }
        })
        .collect();

    let centroid = targets.iter().map(|t| t.position).sum::<Vec3>() / targets.len() as f64;
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let n = scenario.n_auvs;
    let auvs = (0..n)
        .map(|i| {
            let angle = phase + std::f64::consts::TAU * i as f64 / n as f64;
            Body::at(centroid + Vec3::new(angle.cos(), angle.sin(), 0.0) * w.ring_radius)
        })
        .collect();

    Ok(WorldState::new(
        auvs,
        targets,
        scenario.obstacles.clone(),
        scenario.current.clone(),
    ))
}

fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Advances the physics by one step.
///
/// Forces are evaluated on the pre-step state for all vehicles, then each
/// vehicle is integrated with semi-implicit Euler and damping. Positions are
/// clamped to the world cube and the outward velocity component is removed
/// at the wall. Targets move at constant speed and reflect specularly.
pub fn step_world(world: &mut WorldState, actions: &[[f64; 3]], scenario: &ScenarioConfig) -> Result<()> {
    if actions.len() != world.auvs.len() {
        return Err(Error::DimensionMismatch {
            what: "joint action",
            expected: world.auvs.len(),
            got: actions.len(),
        });
    }
    let fluid = &scenario.fluid;
    let wp = &scenario.world;
    let coll = &scenario.collision;
    let dt = fluid.dt;
    let mass = wp.auv_mass;

    let mut forces = Vec::with_capacity(world.auvs.len());
    let mut rel_now = Vec::with_capacity(world.auvs.len());
    for (i, body) in world.auvs.iter().enumerate() {
        let a = Vec3::from(actions[i].map(|x| x.clamp(-1.0, 1.0)));
        let flow = current_velocity(&world.current, &body.position);
        let rel = body.velocity - flow;
        let flow_accel = -(rel - world.prev_rel_velocity[i]) / dt;
        let mut f = a * wp.max_thrust + hydro_force(fluid, &rel, &flow_accel);
        f += flow * (world.current.coupling * mass);
        for (j, other) in world.auvs.iter().enumerate() {
            if j != i {
                // Coincident vehicles have no defined push direction.
                if let Ok(c) = collision_force(
                    &body.position,
                    &other.position,
                    coll.auv_radius,
                    coll.auv_radius,
                    coll,
                ) {
                    f += c;
                }
            }
        }
        for o in &world.obstacles {
            if let Ok(c) = collision_force(&body.position, &o.center(), coll.auv_radius, o.radius, coll) {
                f += c;
            }
        }
        forces.push(f);
        rel_now.push(rel);
    }

    let keep = 1.0 - fluid.damping;
    for (body, f) in world.auvs.iter_mut().zip(&forces) {
        body.velocity = (body.velocity + f * (dt / mass)) * keep;
        body.position += body.velocity * dt;
        for k in 0..3 {
            if body.position[k] > 1.0 {
                body.position[k] = 1.0;
                body.velocity[k] = body.velocity[k].min(0.0);
            } else if body.position[k] < -1.0 {
                body.position[k] = -1.0;
                body.velocity[k] = body.velocity[k].max(0.0);
            }
        }
    }
    world.prev_rel_velocity = rel_now;

    for t in &mut world.targets {
        t.position += t.velocity * dt;
        for k in 0..3 {
            if t.position[k] > 1.0 {
                t.position[k] = 2.0 - t.position[k];
                t.velocity[k] = -t.velocity[k];
            } else if t.position[k] < -1.0 {
                t.position[k] = -2.0 - t.position[k];
                t.velocity[k] = -t.velocity[k];
            }
        }
    }
    world.step += 1;
    world.check_finite()
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub breakdown: Vec<RewardBreakdown>,
    pub done: bool,
}

/// A scenario instance with its current world and fixed target assignment.
#[derive(Debug, Clone)]
pub struct Env {
    scenario: ScenarioConfig,
    episode_len: usize,
    world: WorldState,
    assignment: Vec<usize>,
}

impl Env {
    pub fn new(scenario: ScenarioConfig, episode_len: usize, seed: u64) -> Result<Self> {
        if episode_len == 0 {
            return Err(Error::InvalidConfig("episode length must be positive".into()));
        }
        let world = reset_world(&scenario, seed)?;
        let assignment = assignment_for(&world)?;
        Ok(Self {
            scenario,
            episode_len,
            world,
            assignment,
        })
    }

    /// Wraps an explicitly constructed world, skipping scenario-count
    /// validation (used for single-vehicle and hand-built setups).
    pub fn from_world(
        scenario: ScenarioConfig,
        episode_len: usize,
        world: WorldState,
        assignment: Vec<usize>,
    ) -> Result<Self> {
        if assignment.len() != world.auvs.len()
            || assignment.iter().any(|&t| t >= world.targets.len())
        {
            return Err(Error::InvalidConfig("assignment does not match world".into()));
        }
        if world.prev_rel_velocity.len() != world.auvs.len() {
            return Err(Error::InvalidConfig("world velocity history mismatch".into()));
        }
        Ok(Self {
            scenario,
            episode_len,
            world,
            assignment,
        })
    }

    pub fn reset(&mut self, seed: u64) -> Result<Vec<Observation>> {
        self.world = reset_world(&self.scenario, seed)?;
        self.assignment = assignment_for(&self.world)?;
        Ok(self.observations())
    }

    pub fn step(&mut self, actions: &[[f64; 3]]) -> Result<StepOutcome> {
        if self.world.step >= self.episode_len {
            return Err(Error::InvalidConfig("episode already finished".into()));
        }
        step_world(&mut self.world, actions, &self.scenario)?;
        let breakdown: Vec<RewardBreakdown> = (0..self.n_agents())
            .map(|i| reward(&self.world, i, self.assignment[i], &self.scenario.reward))
            .collect();
        Ok(StepOutcome {
            observations: self.observations(),
            rewards: breakdown.iter().map(|b| b.total).collect(),
            breakdown,
            done: self.world.step >= self.episode_len,
        })
    }

    pub fn observe(&self, agent: usize) -> Observation {
        observe(
            &self.world,
            agent,
            self.assignment[agent],
            &self.scenario.sonar,
            self.scenario.world.world_scale_m,
        )
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.n_agents()).map(|i| self.observe(i)).collect()
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn n_agents(&self) -> usize {
        self.world.auvs.len()
    }

    pub fn episode_len(&self) -> usize {
        self.episode_len
    }

    pub fn obs_layout(&self) -> ObsLayout {
        ObsLayout {
            n_targets: self.world.targets.len(),
            n_neighbors: self.world.auvs.len() - 1,
            n_landmarks: self.world.obstacles.len(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_layout().len()
    }

    /// Positions of each AUV's assigned target.
    pub fn assigned_target_positions(&self) -> Vec<Vec3> {
        self.assignment
            .iter()
            .map(|&t| self.world.targets[t].position)
            .collect()
    }
}

fn assignment_for(world: &WorldState) -> Result<Vec<usize>> {
    let auvs: Vec<Vec3> = world.auvs.iter().map(|b| b.position).collect();
    let targets: Vec<Vec3> = world.targets.iter().map(|b| b.position).collect();
    assign_targets(&auvs, &targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{presets, FluidParams};

    fn still_scenario(n_auvs: usize, n_targets: usize) -> ScenarioConfig {
        let mut s = presets::preset(presets::PRESET_NAMES[0]).unwrap();
        s.n_auvs = n_auvs;
        s.n_targets = n_targets;
        s.obstacles.clear();
        s.current = CurrentField::still();
        s
    }

    fn single_auv_env(fluid: FluidParams) -> Env {
        let mut s = still_scenario(2, 1);
        s.fluid = fluid;
        let world = WorldState::new(
            vec![Body::at(Vec3::zeros())],
            vec![Body::at(Vec3::new(0.5, 0.0, 0.0))],
            vec![],
            CurrentField::still(),
        );
        Env::from_world(s, 10, world, vec![0]).unwrap()
    }

    #[test]
    fn hand_euler_step() {
        let fluid = FluidParams {
            damping: 0.0,
            drag_coeff: 0.0,
            lift_coeff: 0.0,
            virtual_mass_coeff: 0.0,
            ..FluidParams::default()
        };
        let mut env = single_auv_env(fluid);
        env.step(&[[1.0, 0.0, 0.0]]).unwrap();
        let b = env.world().auvs[0];
        assert!((b.velocity - Vec3::new(0.1, 0.0, 0.0)).norm() < 1e-15);
        assert!((b.position - Vec3::new(0.01, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn full_damping_zeroes_velocity() {
        let fluid = FluidParams {
            damping: 1.0,
            ..FluidParams::default()
        };
        let mut env = single_auv_env(fluid);
        for _ in 0..3 {
            env.step(&[[1.0, -1.0, 0.5]]).unwrap();
            assert_eq!(env.world().auvs[0].velocity, Vec3::zeros());
        }
    }

    #[test]
    fn zero_action_keeps_still_world_still() {
        let mut env = Env::new(still_scenario(4, 2), 20, 3).unwrap();
        let before: Vec<Vec3> = env.world().auvs.iter().map(|b| b.position).collect();
        env.step(&[[0.0; 3]; 4]).unwrap();
        let after: Vec<Vec3> = env.world().auvs.iter().map(|b| b.position).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn nan_action_aborts_episode() {
        let mut env = single_auv_env(FluidParams::default());
        assert!(matches!(
            env.step(&[[f64::NAN, 0.0, 0.0]]),
            Err(Error::NonFiniteState { .. })
        ));
    }

    #[test]
    fn done_at_episode_length() {
        let mut env = Env::new(still_scenario(2, 1), 3, 0).unwrap();
        assert!(!env.step(&[[0.0; 3]; 2]).unwrap().done);
        assert!(!env.step(&[[0.0; 3]; 2]).unwrap().done);
        assert!(env.step(&[[0.0; 3]; 2]).unwrap().done);
        assert!(env.step(&[[0.0; 3]; 2]).is_err());
    }

    #[test]
    fn reset_ring_geometry() {
        for (n_auvs, n_targets) in [(2, 1), (4, 2), (6, 2), (8, 3)] {
            let s = still_scenario(n_auvs, n_targets);
            let w = reset_world(&s, 17).unwrap();
            let c = w.targets.iter().map(|t| t.position).sum::<Vec3>() / n_targets as f64;
            for b in &w.auvs {
                assert!(((b.position - c).norm() - s.world.ring_radius).abs() < 1e-9);
            }
            if n_auvs == 2 {
                let a = w.auvs[0].position - c;
                let b = w.auvs[1].position - c;
                let angle = (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos();
                assert!((angle - std::f64::consts::PI).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let s = presets::preset("auv4_tgt2").unwrap();
        assert_eq!(reset_world(&s, 9).unwrap(), reset_world(&s, 9).unwrap());
        assert_ne!(reset_world(&s, 9).unwrap(), reset_world(&s, 10).unwrap());
    }

    #[test]
    fn invalid_counts_rejected() {
        assert!(reset_world(&still_scenario(3, 1), 0).is_err());
        assert!(reset_world(&still_scenario(2, 4), 0).is_err());
        assert!(reset_world(&still_scenario(2, 3), 0).is_err());
    }

    #[test]
    fn observation_layout_and_gating() {
        let mut s = still_scenario(2, 1);
        s.obstacles = vec![
            Obstacle {
                position: [0.5, 0.5, 0.0],
                radius: 0.05,
            },
            Obstacle {
                position: [-0.5, 0.5, 0.0],
                radius: 0.05,
            },
        ];
        let world = WorldState::new(
            vec![Body::at(Vec3::zeros()), Body::at(Vec3::new(-0.2, 0.0, 0.0))],
            vec![Body::at(Vec3::new(0.1, 0.0, 0.0))],
            s.obstacles.clone(),
            CurrentField::still(),
        );
        let obs = observe(&world, 0, 0, &s.sonar, s.world.world_scale_m);
        assert_eq!(obs.values.len(), 18);
        assert_eq!(obs.layout.len(), 18);
        assert_eq!(obs.target(0), [0.1, 0.0, 0.0]);
        assert_eq!(obs.neighbor(0), [-0.2, 0.0, 0.0]);

        let far = WorldState::new(
            vec![Body::at(Vec3::new(-1.0, -1.0, -1.0)), Body::at(Vec3::zeros())],
            vec![Body::at(Vec3::new(1.0, 1.0, 1.0))],
            vec![],
            CurrentField::still(),
        );
        let obs = observe(&far, 0, 0, &s.sonar, s.world.world_scale_m);
        assert_eq!(obs.target(0), [0.0, 0.0, 0.0]);
        assert_eq!(obs.ego(), &[-1.0, -1.0, -1.0, 0.0, 0.0, 0.0]);
    }
}
