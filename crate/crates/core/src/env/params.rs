use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidConfig(msg.to_string()))
    }
}

/// Fluid and vehicle hydrodynamic parameters.
///
/// Forces are evaluated in normalized world units with unit vehicle mass, so
/// the area and volume defaults are scaled down accordingly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluidParams {
    /// kg/m^3
    pub density: f64,
    /// Pa s
    pub viscosity: f64,
    pub drag_coeff: f64,
    pub lift_coeff: f64,
    pub virtual_mass_coeff: f64,
    pub frontal_area: f64,
    pub displaced_volume: f64,
    /// Fraction of velocity removed every step.
    pub damping: f64,
    /// Step duration in seconds.
    pub dt: f64,
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            density: 1000.0,
            viscosity: 1e-3,
            drag_coeff: 0.8,
            lift_coeff: 0.1,
            virtual_mass_coeff: 0.5,
            frontal_area: 1e-3,
            displaced_volume: 1e-4,
            damping: 0.25,
            dt: 0.1,
        }
    }
}

impl FluidParams {
    pub fn validate(&self) -> Result<()> {
        require(self.density > 0.0, "fluid density must be positive")?;
        require(self.viscosity > 0.0, "fluid viscosity must be positive")?;
        require(self.frontal_area > 0.0, "frontal area must be positive")?;
        require(self.displaced_volume > 0.0, "displaced volume must be positive")?;
        require(self.dt > 0.0, "time step must be positive")?;
        require(
            (0.0..=1.0).contains(&self.damping),
            "damping must lie in [0, 1]",
        )?;
        require(
            self.drag_coeff >= 0.0 && self.virtual_mass_coeff >= 0.0,
            "drag and virtual-mass coefficients must be non-negative",
        )
    }
}

/// Active sonar budget terms, all in dB except absorption (dB/km).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SonarParams {
    pub source_level: f64,
    pub target_strength: f64,
    pub noise_level: f64,
    pub directivity_index: f64,
    pub detection_threshold: f64,
    pub absorption_db_per_km: f64,
}

impl Default for SonarParams {
    /// Detection range of roughly 3.1 km (about 1.24 normalized units).
    fn default() -> Self {
        Self {
            source_level: 200.0,
            target_strength: 10.0,
            noise_level: 70.0,
            directivity_index: 10.0,
            detection_threshold: 10.0,
            absorption_db_per_km: 0.05,
        }
    }
}

/// Smooth contact model parameters. Radii are in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionParams {
    pub smoothing: f64,
    pub contact_stiffness: f64,
    pub auv_radius: f64,
}

impl Default for CollisionParams {
    fn default() -> Self {
        Self {
            smoothing: 0.005,
            contact_stiffness: 100.0,
            auv_radius: 0.016,
        }
    }
}

impl CollisionParams {
    pub fn validate(&self) -> Result<()> {
        require(self.smoothing > 0.0, "collision smoothing k must be positive")?;
        require(
            self.contact_stiffness > 0.0,
            "contact stiffness must be positive",
        )?;
        require(self.auv_radius > 0.0, "AUV collision radius must be positive")
    }
}

/// Composite reward weights and safety thresholds (normalized units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub position_weight: f64,
    pub collision_weight: f64,
    pub obstacle_weight: f64,
    /// Proximity penalty modulator, must exceed 1.
    pub proximity_modulator: f64,
    pub target_margin: f64,
    pub auv_margin: f64,
    pub obstacle_margin: f64,
    pub obstacle_penalty: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            position_weight: 1.0,
            collision_weight: 0.1,
            obstacle_weight: 1.0,
            proximity_modulator: 2.0,
            // 80 m at 2.5 km per unit
            target_margin: 0.032,
            auv_margin: 0.032,
            obstacle_margin: 0.1,
            obstacle_penalty: 1.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        require(
            self.position_weight >= 0.0 && self.collision_weight >= 0.0 && self.obstacle_weight >= 0.0,
            "reward weights must be non-negative",
        )?;
        require(self.proximity_modulator > 1.0, "proximity modulator w must exceed 1")?;
        require(
            self.target_margin > 0.0 && self.auv_margin > 0.0 && self.obstacle_margin > 0.0,
            "reward thresholds must be positive",
        )?;
        require(self.obstacle_penalty > 0.0, "obstacle penalty must be positive")
    }
}

/// Steady ocean current: a uniform drift plus a smooth vortex about a
/// vertical axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurrentField {
    pub uniform: [f64; 3],
    pub vortex_strength: f64,
    pub vortex_center: [f64; 3],
    pub vortex_core: f64,
    /// Scale of the advection force `coupling * mass * u_c(p)`.
    pub coupling: f64,
}

impl Default for CurrentField {
    fn default() -> Self {
        Self {
            uniform: [0.01, 0.005, 0.0],
            vortex_strength: 0.004,
            vortex_center: [0.0, 0.0, 0.0],
            vortex_core: 0.3,
            coupling: 1.0,
        }
    }
}

impl CurrentField {
    pub fn still() -> Self {
        Self {
            uniform: [0.0; 3],
            vortex_strength: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(self.vortex_core > 0.0, "vortex core radius must be positive")
    }
}

/// Placement, vehicle and unit-scale parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    /// Meters per normalized unit.
    pub world_scale_m: f64,
    /// Radius of the spawn ring around the target centroid.
    pub ring_radius: f64,
    /// Targets spawn uniformly in `[-r, r]^3`.
    pub target_spawn_half_width: f64,
    pub target_speed: f64,
    pub auv_mass: f64,
    pub max_thrust: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            world_scale_m: 2500.0,
            // 2 km at 2.5 km per unit
            ring_radius: 0.8,
            target_spawn_half_width: 0.1,
            target_speed: 0.05,
            auv_mass: 1.0,
            max_thrust: 1.0,
        }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<()> {
        require(self.world_scale_m > 0.0, "world scale must be positive")?;
        require(self.ring_radius > 0.0, "ring radius must be positive")?;
        require(
            self.target_spawn_half_width >= 0.0
                && self.ring_radius + self.target_spawn_half_width < 1.0,
            "spawn ring must fit inside the world cube",
        )?;
        require(self.target_speed >= 0.0, "target speed must be non-negative")?;
        require(self.auv_mass > 0.0, "AUV mass must be positive")?;
        require(self.max_thrust >= 0.0, "max thrust must be non-negative")
    }
}
