use serde::{Deserialize, Serialize};

use super::log::EpisodeLog;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episode: usize,
    pub seed: u64,
    /// Mean over AUVs of the episode's summed reward.
    pub mean_cumulative_reward: f64,
    /// Fraction of steps within the threshold of the assigned target,
    /// averaged over AUVs.
    pub tracking_accuracy: f64,
    pub velocity_diff_mean: f64,
    pub velocity_diff_sd: f64,
    pub path_length_per_auv: Vec<f64>,
    pub path_length_mean: f64,
    pub path_length_sd: f64,
}

/// Mean and sample standard deviation; the deviation of fewer than two
/// values is zero.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Episode metrics from a complete trajectory log.
pub fn compute_metrics(log: &EpisodeLog, seed: u64, threshold: f64) -> Result<MetricsRecord> {
    log.check_complete()?;
    let first = &log.records[0];
    let n = first.auv_positions.len();
    if n == 0 {
        return Err(Error::InvalidConfig("log has no AUVs".into()));
    }
    let steps = &log.records[1..];
    let mut rewards = vec![0.0; n];
    let mut within = vec![0usize; n];
    let mut vel_diffs = Vec::with_capacity(steps.len() * n);
    let mut paths = vec![0.0; n];
    let mut prev = first;
    for r in steps {
        if r.rewards.len() != n || r.auv_positions.len() != n || r.assignment.len() != n {
            return Err(Error::SchemaMismatch(format!("step {} has inconsistent agent count", r.step)));
        }
        for i in 0..n {
            let t = r.assignment[i];
            rewards[i] += r.rewards[i];
            if dist(&r.auv_positions[i], &r.target_positions[t]) < threshold {
                within[i] += 1;
            }
            vel_diffs.push(dist(&r.auv_velocities[i], &r.target_velocities[t]));
            paths[i] += dist(&r.auv_positions[i], &prev.auv_positions[i]);
        }
        prev = r;
    }
    let n_steps = steps.len() as f64;
    let (velocity_diff_mean, velocity_diff_sd) = mean_sd(&vel_diffs);
    let (path_length_mean, path_length_sd) = mean_sd(&paths);
    Ok(MetricsRecord {
        episode: log.episode,
        seed,
        mean_cumulative_reward: rewards.iter().sum::<f64>() / n as f64,
        tracking_accuracy: within.iter().map(|&w| w as f64 / n_steps).sum::<f64>() / n as f64,
        velocity_diff_mean,
        velocity_diff_sd,
        path_length_per_auv: paths,
        path_length_mean,
        path_length_sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::StepRecord;

    fn log_from(positions: Vec<[f64; 3]>, velocity: [f64; 3], target: [f64; 3], target_v: [f64; 3]) -> EpisodeLog {
        let records = positions
            .iter()
            .enumerate()
            .map(|(k, p)| StepRecord {
                episode: 0,
                step: k,
                auv_positions: vec![*p],
                auv_velocities: vec![velocity],
                target_positions: vec![target],
                target_velocities: vec![target_v],
                assignment: vec![0],
                rewards: if k == 0 { vec![] } else { vec![-1.0] },
            })
            .collect();
        EpisodeLog {
            episode: 0,
            episode_len: positions.len() - 1,
            dt: 0.1,
            records,
        }
    }

    #[test]
    fn glued_auv() {
        let p = [0.2, 0.1, 0.0];
        let log = log_from(vec![p; 11], [0.05, 0.0, 0.0], p, [0.05, 0.0, 0.0]);
        let m = compute_metrics(&log, 3, 0.08).unwrap();
        assert_eq!(m.tracking_accuracy, 1.0);
        assert_eq!(m.velocity_diff_mean, 0.0);
        assert_eq!(m.path_length_mean, 0.0);
        assert_eq!(m.mean_cumulative_reward, -10.0);
        assert_eq!(m.seed, 3);
    }

    #[test]
    fn straight_line_path_length() {
        // unit speed, 100 steps of 0.1
        let positions: Vec<[f64; 3]> = (0..=100).map(|k| [-0.5 + 0.1 * k as f64, 0.0, 0.0]).collect();
        let log = log_from(positions, [1.0, 0.0, 0.0], [5.0, 5.0, 5.0], [0.0; 3]);
        let m = compute_metrics(&log, 0, 0.08).unwrap();
        assert!((m.path_length_mean - 10.0).abs() < 1e-9);
        assert_eq!(m.tracking_accuracy, 0.0);
        assert!((m.velocity_diff_mean - 1.0).abs() < 1e-15);
    }

    #[test]
    fn truncated_log_rejected() {
        let mut log = log_from(vec![[0.0; 3]; 11], [0.0; 3], [0.0; 3], [0.0; 3]);
        log.records.truncate(7);
        assert!(matches!(
            compute_metrics(&log, 0, 0.08),
            Err(Error::TruncatedLog { expected: 11, got: 7 })
        ));
    }

    #[test]
    fn mean_sd_basics() {
        assert_eq!(mean_sd(&[4.0]), (4.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
