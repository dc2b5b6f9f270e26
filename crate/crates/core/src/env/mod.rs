//! Underwater multi-AUV tracking environment.
//!
//! The world is the cube `[-1, 1]^3` in normalized units (see
//! [`WorldParams::world_scale_m`]). AUVs are point masses driven by
//! three-axis thrust, hydrodynamic loads evaluated against a steady current
//! field, and smooth contact forces. Observations are sonar gated.

pub mod params;
pub mod physics;
pub mod reward;
mod scenario;
pub mod world;

pub use params::{CollisionParams, CurrentField, FluidParams, RewardParams, SonarParams, WorldParams};
pub use physics::Vec3;
pub use reward::RewardBreakdown;
pub use scenario::{presets, ScenarioConfig, VALID_AUV_COUNTS, VALID_TARGET_COUNTS};
pub use world::{current_velocity, observe, reset_world, step_world, Body, Env, ObsLayout, Observation, Obstacle, StepOutcome, WorldState};

/// Action dimension of a single AUV.
pub const ACTION_DIM: usize = 3;
