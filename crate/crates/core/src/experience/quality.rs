use serde::{Deserialize, Serialize};

use crate::env::Vec3;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityParams {
    /// Angular tolerance in radians, in `(0, pi/2)`.
    pub theta_threshold: f64,
    /// Minimum displacement per step for a move to count.
    pub eps_min: f64,
    /// Fraction of agents that must be valid for a step to be harvested.
    pub harvest_ratio: f64,
}

impl Default for QualityParams {
    fn default() -> Self {
        Self {
            theta_threshold: std::f64::consts::FRAC_PI_4,
            eps_min: 1e-3,
            harvest_ratio: 1.0 / 3.0,
        }
    }
}

impl QualityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_threshold > 0.0 && self.theta_threshold < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidConfig(format!(
                "theta_threshold {} must lie in (0, pi/2)",
                self.theta_threshold
            )));
        }
        if !(self.eps_min > 0.0) {
            return Err(Error::InvalidConfig("eps_min must be positive".into()));
        }
        if !(self.harvest_ratio > 0.0 && self.harvest_ratio <= 1.0) {
            return Err(Error::InvalidConfig("harvest_ratio must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Minimum number of valid agents for a step to be stored: at least one,
    /// and at least `floor(n * ratio)`.
    pub fn gate(&self, n_agents: usize) -> usize {
        // The small offset keeps e.g. 6 * (1/3) from flooring to 1.
        (((n_agents as f64) * self.harvest_ratio + 1e-9).floor() as usize).max(1)
    }
}

/// Whether the move `p_prev -> p_curr` is significant, points within
/// `theta_threshold` of the target direction and reduces the distance to
/// the target.
pub fn assess_quality(p_prev: &Vec3, p_curr: &Vec3, p_target: &Vec3, q: &QualityParams) -> bool {
    let dp = p_curr - p_prev;
    let dp_tgt = p_target - p_prev;
    let n = dp.norm();
    let n_tgt = dp_tgt.norm();
    if n < q.eps_min || n_tgt == 0.0 {
        return false;
    }
    let cos = dp.dot(&dp_tgt) / (n * n_tgt);
    cos > q.theta_threshold.cos() && (p_curr - p_target).norm() < n_tgt
}
