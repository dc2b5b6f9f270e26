use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sdamarl::env::physics::{collision_force, hydro_force, sonar_excess_margin};
use sdamarl::env::{presets, reset_world, step_world, CollisionParams, FluidParams, SonarParams, Vec3};
use sdamarl::experience::{assess_quality, QualityParams, ReplayBuffer, Schema, SourceFilter, Transition};
use sdamarl::harness::{compute_metrics, EpisodeLog, StepRecord};
use sdamarl::nn::{Activation, Mlp};
use sdamarl::trainer::critic_target;

fn net(seed: u64, widths: &[usize], out: Activation) -> Mlp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mlp::new(widths, Activation::Tanh, out, &mut rng).unwrap()
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_is_deterministic(seed in any::<u64>(), x in prop::collection::vec(-3.0..3.0f64, 4)) {
        let a = net(seed, &[4, 8, 2], Activation::Identity);
        let b = net(seed, &[4, 8, 2], Activation::Identity);
        prop_assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
    }

    #[test]
    fn tanh_head_is_bounded(seed in any::<u64>(), x in prop::collection::vec(-1e3..1e3f64, 3)) {
        let a = net(seed, &[3, 5, 3], Activation::Tanh);
        for y in a.forward(&x).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&y));
        }
    }

    #[test]
    fn soft_update_is_affine_and_contracts(s1 in any::<u64>(), s2 in any::<u64>(), tau in 0.0..1.0f64) {
        let online = net(s1, &[3, 4, 2], Activation::Identity);
        let old = net(s2, &[3, 4, 2], Activation::Identity);
        let mut once = old.clone();
        once.soft_update(&online, tau).unwrap();
        let mut twice = old.clone();
        twice.soft_update(&online, tau).unwrap();
        twice.soft_update(&online, 0.0).unwrap();
        prop_assert_eq!(&once, &twice);

        let dist = |m: &Mlp| m.params().zip(online.params()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!((dist(&once) - (1.0 - tau) * dist(&old)).abs() < 1e-12);
    }

    #[test]
    fn excess_margin_decreases_with_range(r in 1.0..1e5f64, k in 1.0001..10.0f64) {
        let s = SonarParams::default();
        prop_assert!(sonar_excess_margin(&s, r * k).unwrap() < sonar_excess_margin(&s, r).unwrap());
    }

    #[test]
    fn contact_forces_are_antisymmetric(a in vec3(), b in vec3(), ra in 0.01..0.2f64, rb in 0.01..0.2f64) {
        prop_assume!((a - b).norm() > 1e-9);
        let p = CollisionParams::default();
        let fab = collision_force(&a, &b, ra, rb, &p).unwrap();
        let fba = collision_force(&b, &a, rb, ra, &p).unwrap();
        prop_assert!((fab + fba).norm() < 1e-12 * (1.0 + fab.norm()));
    }

    #[test]
    fn drag_opposes_relative_motion(u in vec3()) {
        prop_assume!(u.norm() > 1e-6);
        let f = FluidParams { lift_coeff: 0.0, ..FluidParams::default() };
        prop_assert!(hydro_force(&f, &u, &Vec3::zeros()).dot(&u) < 0.0);
    }

    #[test]
    fn quality_is_rotation_and_scale_invariant(
        p in vec3(), c in vec3(), t in vec3(),
        axis in vec3(), angle in 0.0..std::f64::consts::TAU, scale in 0.5..2.0f64,
    ) {
        prop_assume!(axis.norm() > 1e-3);
        let q = QualityParams::default();
        let base = assess_quality(&p, &c, &t, &q);
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        let rotated = assess_quality(&(rot * p), &(rot * c), &(rot * t), &q);
        // Rounding can flip a label only when the inputs sit on a decision boundary.
        let dp = c - p;
        let cos = dp.dot(&(t - p)) / (dp.norm() * (t - p).norm());
        let near_boundary = (cos - q.theta_threshold.cos()).abs() < 1e-9
            || ((c - t).norm() - (t - p).norm()).abs() < 1e-9
            || (dp.norm() - q.eps_min).abs() < 1e-9;
        if !near_boundary {
            prop_assert_eq!(base, rotated);
            let shift = Vec3::new(0.3, -0.2, 0.1);
            prop_assert_eq!(base, assess_quality(&(p + shift), &(c + shift), &(t + shift), &q));
            let scaled_q = QualityParams { eps_min: q.eps_min * scale, ..q.clone() };
            prop_assert_eq!(base, assess_quality(&(p * scale), &(c * scale), &(t * scale), &scaled_q));
        }
    }

    #[test]
    fn buffer_counts_track_contents(sources in prop::collection::vec(0u8..2, 1..300), cap in 1usize..64, seed in any::<u64>()) {
        let schema = Schema { n_agents: 1, obs_dim: 1, action_dim: 1 };
        let mut buf = ReplayBuffer::new(schema, cap).unwrap();
        for (i, &s) in sources.iter().enumerate() {
            buf.push(Transition {
                obs: vec![vec![i as f64]],
                actions: vec![vec![0.0]],
                rewards: vec![0.0],
                next_obs: vec![vec![0.0]],
                done: false,
                source: s,
            }).unwrap();
        }
        let kept = &sources[sources.len().saturating_sub(cap)..];
        let ones = kept.iter().filter(|&&s| s == 1).count();
        prop_assert_eq!(buf.counts(), [kept.len() - ones, ones]);
        prop_assert_eq!(buf.len(), kept.len());
        prop_assert_eq!(buf.evictions() as usize, sources.len() - kept.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if ones > 0 {
            for t in buf.sample(ones, SourceFilter::Only1, &mut rng).unwrap() {
                prop_assert_eq!(t.source, 1);
            }
        }
        prop_assert!(buf.sample(kept.len() + 1, SourceFilter::Any, &mut rng).is_err());
    }

    #[test]
    fn critic_target_respects_per_critic_bound(
        seed in any::<u64>(),
        r in -2.0..2.0f64,
        gamma in 0.0..1.0f64,
        n_cand in 1usize..6,
    ) {
        let q1 = net(seed, &[4, 6, 1], Activation::Identity);
        let q2 = net(seed ^ 1, &[4, 6, 1], Activation::Identity);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<f64> = (0..2).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let cands: Vec<Vec<f64>> = (0..n_cand)
            .map(|_| (0..2).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect())
            .collect();
        let y = critic_target(&[r], &[false], std::slice::from_ref(&s), std::slice::from_ref(&cands), [&q1, &q2], gamma).unwrap()[0];
        for q in [&q1, &q2] {
            let best = cands
                .iter()
                .map(|a| q.forward(&[s.clone(), a.clone()].concat()).unwrap()[0])
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(y <= r + gamma * best + 1e-12);
        }
    }

    #[test]
    fn path_length_bounds_displacement(steps in prop::collection::vec(vec3(), 2..40)) {
        let records: Vec<StepRecord> = steps
            .iter()
            .enumerate()
            .map(|(i, p)| StepRecord {
                episode: 0,
                step: i,
                auv_positions: vec![[p.x, p.y, p.z]],
                auv_velocities: vec![[0.0; 3]],
                target_positions: vec![[0.0; 3]],
                target_velocities: vec![[0.0; 3]],
                assignment: vec![0],
                rewards: if i == 0 { vec![] } else { vec![0.0] },
            })
            .collect();
        let log = EpisodeLog { episode: 0, episode_len: steps.len() - 1, dt: 0.1, records };
        let m = compute_metrics(&log, 0, 0.08).unwrap();
        let disp = (steps[steps.len() - 1] - steps[0]).norm();
        prop_assert!(m.path_length_per_auv[0] + 1e-12 >= disp);
        prop_assert!((0.0..=1.0).contains(&m.tracking_accuracy));
    }
}

#[test]
fn positions_stay_in_cube_under_long_random_drive() {
    let scenario = presets::preset("auv4_tgt2").unwrap();
    let mut world = reset_world(&scenario, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100_000 {
        let actions: Vec<[f64; 3]> = (0..scenario.n_auvs)
            .map(|_| std::array::from_fn(|_| rand::Rng::random_range(&mut rng, -1.0..=1.0)))
            .collect();
        step_world(&mut world, &actions, &scenario).unwrap();
        for b in world.auvs.iter().chain(&world.targets) {
            assert!(b.position.iter().all(|x| x.abs() <= 1.0), "{:?}", b.position);
        }
    }
}
