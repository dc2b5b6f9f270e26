//! Dual-decision training loop: per-AUV DDPG agents with centralized twin
//! critics, paired diffusion agents trained on harvested experience, and the
//! plain MADDPG baseline.

mod agents;
mod config;
mod run;

pub use agents::{
    assign_targets, critic_target, critic_update, ddpg_actor_update, diffusion_agent_update, AgentNets, CriticLosses,
    CriticPair, CriticView, DiffusionAgent, DiffusionStepParams, DiffusionUpdate,
};
pub use config::{Algo, TrainConfig, TrainOverrides};
pub use run::{
    algo_setup, load_actors, save_agents, stream_rng, train, train_baseline_maddpg, train_with, Stream, TrainOutcome,
    TrainRecord, Trainer, TRACKING_THRESHOLD,
};
