use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Linear variance schedule with derived `alpha` and cumulative `alpha_bar`
/// tables. Timesteps are 1-based: `beta(1)` is the first entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    beta_min: f64,
    beta_max: f64,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Default bounds for `t_steps`: `1e-4` to `0.02` scaled by `1000 / T`,
/// with the upper bound capped at 0.5 so short chains stay well defined.
pub fn default_bounds(t_steps: usize) -> (f64, f64) {
    let scale = 1000.0 / t_steps.max(1) as f64;
    let beta_max = (0.02 * scale).min(0.5);
    let beta_min = (1e-4 * scale).min(beta_max);
    (beta_min, beta_max)
}

pub fn make_schedule(t_steps: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if t_steps == 0 {
        return Err(Error::InvalidConfig("diffusion needs at least one step".into()));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "beta bounds must satisfy 0 < {beta_min} <= {beta_max} < 1"
        )));
    }
    let betas: Vec<f64> = (0..t_steps)
        .map(|i| {
            if t_steps == 1 {
                beta_min
            } else {
                beta_min + (beta_max - beta_min) * i as f64 / (t_steps - 1) as f64
            }
        })
        .collect();
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bars = Vec::with_capacity(t_steps);
    let mut acc = 1.0;
    for a in &alphas {
        acc *= a;
        alpha_bars.push(acc);
    }
    Ok(NoiseSchedule {
        beta_min,
        beta_max,
        betas,
        alphas,
        alpha_bars,
    })
}

impl NoiseSchedule {
    pub fn with_default_bounds(t_steps: usize) -> Result<Self> {
        let (lo, hi) = default_bounds(t_steps);
        make_schedule(t_steps, lo, hi)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }

    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }

    fn index(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::OutOfRange {
                what: "diffusion timestep",
                value: format!("{t} (valid 1..={})", self.steps()),
            });
        }
        Ok(t - 1)
    }

    /// # Panics
    /// If `t` is outside `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    /// `alpha_bar(t - 1)` with `alpha_bar(0) = 1`.
    pub fn alpha_bar_prev(&self, t: usize) -> f64 {
        if t == 1 {
            1.0
        } else {
            self.alpha_bars[t - 2]
        }
    }

    /// Posterior standard deviation of the reverse step at `t`; zero at t = 1.
    pub fn sigma(&self, t: usize) -> f64 {
        let var = self.beta(t) * (1.0 - self.alpha_bar_prev(t)) / (1.0 - self.alpha_bar(t));
        var.sqrt()
    }

    /// `sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps`.
    pub fn forward_noise(&self, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        let i = self.index(t)?;
        check_len("noise", x0.len(), eps.len())?;
        let ab = self.alpha_bars[i];
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
    }

    /// Inverse of [`forward_noise`](Self::forward_noise) given a noise estimate.
    pub fn predict_x0(&self, x_t: &[f64], t: usize, eps_hat: &[f64]) -> Result<Vec<f64>> {
        let i = self.index(t)?;
        check_len("noise estimate", x_t.len(), eps_hat.len())?;
        let ab = self.alpha_bars[i];
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(x_t.iter().zip(eps_hat).map(|(x, e)| (x - b * e) / a).collect())
    }

    /// Coefficients `(c_x, c_eps)` of the reverse mean
    /// `c_x * x_t - c_eps * eps_hat`.
    pub fn reverse_coefficients(&self, t: usize) -> (f64, f64) {
        let c_x = 1.0 / self.alpha(t).sqrt();
        let c_eps = c_x * self.beta(t) / (1.0 - self.alpha_bar(t)).sqrt();
        (c_x, c_eps)
    }
}
