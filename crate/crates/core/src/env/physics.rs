//! Sonar detection budget, hydrodynamic loads and the smooth contact model.

use nalgebra::Vector3;

use super::params::{CollisionParams, FluidParams, SonarParams};
use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Spherical spreading plus linear absorption.
pub fn transmission_loss(sonar: &SonarParams, range_m: f64) -> f64 {
    20.0 * range_m.log10() + sonar.absorption_db_per_km * range_m / 1000.0
}

/// Excess margin for a given one-way transmission loss.
pub fn excess_margin_for_loss(sonar: &SonarParams, transmission_loss: f64) -> f64 {
    sonar.source_level - 2.0 * transmission_loss + sonar.target_strength
        - (sonar.noise_level - sonar.directivity_index)
        - sonar.detection_threshold
}

/// Active sonar excess margin at `range_m` meters. A contact is detected
/// when the margin is non-negative.
pub fn sonar_excess_margin(sonar: &SonarParams, range_m: f64) -> Result<f64> {
    if !(range_m > 0.0) {
        return Err(Error::OutOfRange {
            what: "sonar range",
            value: range_m.to_string(),
        });
    }
    Ok(excess_margin_for_loss(
        sonar,
        transmission_loss(sonar, range_m),
    ))
}

pub fn is_detected(sonar: &SonarParams, range_m: f64) -> bool {
    // Zero range is trivially in contact.
    range_m <= 0.0 || sonar_excess_margin(sonar, range_m).is_ok_and(|em| em >= 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydroForces {
    pub drag: Vec3,
    pub lift: Vec3,
    pub virtual_mass: Vec3,
}

impl HydroForces {
    pub fn total(&self) -> Vec3 {
        self.drag + self.lift + self.virtual_mass
    }
}

/// Drag, lift and virtual-mass loads.
///
/// `rel_velocity` is the vehicle velocity relative to the surrounding flow;
/// drag opposes it and lift acts perpendicular to it, in the plane spanned by
/// the relative velocity and world up (+z). `flow_accel` is the rate of
/// change of the flow velocity seen by the vehicle.
pub fn hydro_components(fluid: &FluidParams, rel_velocity: &Vec3, flow_accel: &Vec3) -> HydroForces {
    let speed = rel_velocity.norm();
    let dynamic_pressure = 0.5 * fluid.density * speed * speed;
    let (drag, lift) = if speed > 0.0 {
        let dir = rel_velocity / speed;
        let drag = -dir * (dynamic_pressure * fluid.drag_coeff * fluid.frontal_area);
        let up = Vec3::z();
        let perp = up - dir * up.dot(&dir);
        let perp_norm = perp.norm();
        let lift = if perp_norm > 1e-12 {
            perp / perp_norm * (dynamic_pressure * fluid.lift_coeff * fluid.frontal_area)
        } else {
            Vec3::zeros()
        };
        (drag, lift)
    } else {
        (Vec3::zeros(), Vec3::zeros())
    };
    let virtual_mass =
        flow_accel * (fluid.density * fluid.virtual_mass_coeff * fluid.displaced_volume);
    HydroForces {
        drag,
        lift,
        virtual_mass,
    }
}

pub fn hydro_force(fluid: &FluidParams, rel_velocity: &Vec3, flow_accel: &Vec3) -> Vec3 {
    hydro_components(fluid, rel_velocity, flow_accel).total()
}

/// `k * ln(1 + exp(-(d - (r_a + r_b)) / k))`, evaluated without overflow.
pub fn penetration_depth(distance: f64, radius_sum: f64, smoothing: f64) -> f64 {
    let x = -(distance - radius_sum) / smoothing;
    let softplus = if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    };
    smoothing * softplus
}

/// Repulsive contact force on body `a` from body `b`.
pub fn collision_force(
    p_a: &Vec3,
    p_b: &Vec3,
    r_a: f64,
    r_b: f64,
    params: &CollisionParams,
) -> Result<Vec3> {
    let delta = p_a - p_b;
    let d = delta.norm();
    if d == 0.0 {
        return Err(Error::CoincidentPositions);
    }
    let sigma = penetration_depth(d, r_a + r_b, params.smoothing);
    Ok(delta / d * (params.contact_stiffness * sigma))
}
