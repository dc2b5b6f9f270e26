use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experience::DEFAULT_CAPACITY;
use crate::nn::{AdamConfig, DEFAULT_HIDDEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    SdaMarl,
    Maddpg,
    /// SDA-MARL with harvesting, cloning, diffusion candidates and diffusion
    /// updates switched off.
    AblationNoDiffusion,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::SdaMarl, Algo::Maddpg, Algo::AblationNoDiffusion];

    pub fn name(self) -> &'static str {
        match self {
            Algo::SdaMarl => "sda_marl",
            Algo::Maddpg => "maddpg",
            Algo::AblationNoDiffusion => "ablation_no_diffusion",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm `{s}` (sda_marl, maddpg, ablation_no_diffusion)")))
    }
}

/// Training hyperparameters. `Default` is the desk-scale profile;
/// [`TrainConfig::paper_scale`] restores the full-length values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub episode_len: usize,
    pub batch_size: usize,
    /// Environment steps between update cycles.
    pub update_interval: usize,
    /// Gradient steps per update cycle.
    pub updates_per_cycle: usize,
    /// Buffer size before the first update.
    pub warmup: usize,
    pub tau: f64,
    pub gamma: f64,
    pub ema_decay: f64,
    /// Diffusion gradient steps between EMA updates.
    pub ema_interval: usize,
    /// Weight of the Q term in the diffusion actor loss.
    pub eta: f64,
    /// Cloning weight of the DDPG actor, decayed linearly over training.
    pub bc_weight_start: f64,
    pub bc_weight_end: f64,
    /// Joint actions considered in the bootstrap max: the target actors'
    /// action plus `n_candidates - 1` diffusion samples.
    pub n_candidates: usize,
    pub explore_sigma: f64,
    pub harvest_sigma: f64,
    pub harvest: bool,
    pub diffusion_updates: bool,
    pub diffusion_steps: usize,
    pub beta_min: Option<f64>,
    pub beta_max: Option<f64>,
    pub hidden: usize,
    pub adam: AdamConfig,
    pub buffer_capacity: usize,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 300,
            episode_len: 100,
            batch_size: 64,
            update_interval: 10,
            updates_per_cycle: 1,
            warmup: 1000,
            tau: 0.01,
            gamma: 0.95,
            ema_decay: 0.99,
            ema_interval: 1,
            eta: 1.0,
            bc_weight_start: 0.5,
            bc_weight_end: 0.1,
            n_candidates: 5,
            explore_sigma: 0.1,
            harvest_sigma: 0.1,
            harvest: true,
            diffusion_updates: true,
            diffusion_steps: 10,
            beta_min: None,
            beta_max: None,
            hidden: 64,
            adam: AdamConfig::default(),
            buffer_capacity: DEFAULT_CAPACITY,
            eval_episodes: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn paper_scale() -> Self {
        Self {
            episodes: 4000,
            episode_len: 400,
            batch_size: 256,
            update_interval: 400,
            warmup: 4000,
            diffusion_steps: 20,
            hidden: DEFAULT_HIDDEN,
            ..Self::default()
        }
    }

    /// Applies the algorithm's switches on top of these hyperparameters.
    pub fn for_algo(mut self, algo: Algo) -> Self {
        match algo {
            Algo::SdaMarl => {}
            Algo::Maddpg | Algo::AblationNoDiffusion => {
                self.harvest = false;
                self.diffusion_updates = false;
                self.bc_weight_start = 0.0;
                self.bc_weight_end = 0.0;
                self.n_candidates = 1;
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.episodes == 0 || self.episode_len == 0 {
            return bad("episodes and episode_len must be positive");
        }
        if self.batch_size == 0 || self.update_interval == 0 || self.updates_per_cycle == 0 {
            return bad("batch_size, update_interval and updates_per_cycle must be positive");
        }
        if self.warmup < self.batch_size {
            return bad("warmup must be at least batch_size");
        }
        if !(0.0..=1.0).contains(&self.tau) || !(0.0..=1.0).contains(&self.ema_decay) {
            return bad("tau and ema_decay must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.ema_interval == 0 || self.n_candidates == 0 || self.diffusion_steps == 0 || self.hidden == 0 {
            return bad("ema_interval, n_candidates, diffusion_steps and hidden must be positive");
        }
        if self.eta < 0.0 || self.bc_weight_start < 0.0 || self.bc_weight_end < 0.0 {
            return bad("eta and cloning weights must be non-negative");
        }
        if !(self.explore_sigma >= 0.0 && self.harvest_sigma >= 0.0) {
            return bad("exploration sigmas must be non-negative");
        }
        if self.buffer_capacity < self.warmup {
            return bad("buffer_capacity must be at least warmup");
        }
        if self.beta_min.is_some() != self.beta_max.is_some() {
            return bad("beta_min and beta_max must be given together");
        }
        Ok(())
    }

    /// Cloning weight for a 0-based episode index.
    pub fn bc_weight(&self, episode: usize) -> f64 {
        let frac = if self.episodes <= 1 {
            0.0
        } else {
            episode as f64 / (self.episodes - 1) as f64
        };
        self.bc_weight_start + (self.bc_weight_end - self.bc_weight_start) * frac
    }
}

/// Optional per-field overrides, as carried in scenario documents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episode_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub update_interval: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub updates_per_cycle: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ema_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ema_interval: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bc_weight_start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bc_weight_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_candidates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explore_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub harvest_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diffusion_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buffer_capacity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_episodes: Option<usize>,
    /// Adam learning rate for every network.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
}

impl TrainOverrides {
    pub fn apply(&self, c: &mut TrainConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f {
                    c.$f = v;
                }
            )*};
        }
        set!(
            episodes,
            episode_len,
            batch_size,
            update_interval,
            updates_per_cycle,
            warmup,
            tau,
            gamma,
            ema_decay,
            ema_interval,
            eta,
            bc_weight_start,
            bc_weight_end,
            n_candidates,
            explore_sigma,
            harvest_sigma,
            diffusion_steps,
            hidden,
            buffer_capacity,
            eval_episodes
        );
        if let Some(lr) = self.lr {
            c.adam.lr = lr;
        }
    }
}
