use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{CollisionParams, CurrentField, FluidParams, RewardParams, SonarParams, WorldParams};
use super::world::Obstacle;
use crate::error::{Error, Result};
use crate::experience::QualityParams;
use crate::trainer::TrainOverrides;

pub const VALID_AUV_COUNTS: [usize; 4] = [2, 4, 6, 8];
pub const VALID_TARGET_COUNTS: [usize; 3] = [1, 2, 3];

/// Complete scenario description. Every parameter group falls back to its
/// defaults when omitted from a JSON document; unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub n_auvs: usize,
    pub n_targets: usize,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub fluid: FluidParams,
    #[serde(default)]
    pub sonar: SonarParams,
    #[serde(default)]
    pub collision: CollisionParams,
    #[serde(default)]
    pub reward: RewardParams,
    #[serde(default)]
    pub world: WorldParams,
    #[serde(default)]
    pub current: CurrentField,
    #[serde(default)]
    pub quality: QualityParams,
    #[serde(default)]
    pub train: TrainOverrides,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !VALID_AUV_COUNTS.contains(&self.n_auvs) {
            return Err(Error::InvalidConfig(format!(
                "AUV count {} not in {VALID_AUV_COUNTS:?}",
                self.n_auvs
            )));
        }
        if !VALID_TARGET_COUNTS.contains(&self.n_targets) {
            return Err(Error::InvalidConfig(format!(
                "target count {} not in {VALID_TARGET_COUNTS:?}",
                self.n_targets
            )));
        }
        if self.n_targets > self.n_auvs {
            return Err(Error::InvalidConfig(format!(
                "{} targets cannot be covered by {} AUVs",
                self.n_targets, self.n_auvs
            )));
        }
        for o in &self.obstacles {
            if !(o.radius > 0.0) || o.position.iter().any(|x| !x.is_finite() || x.abs() > 1.0) {
                return Err(Error::InvalidConfig(format!("bad obstacle {o:?}")));
            }
        }
        self.fluid.validate()?;
        self.collision.validate()?;
        self.reward.validate()?;
        self.world.validate()?;
        self.current.validate()?;
        self.quality.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub mod presets {
    use super::*;

    pub const PRESET_NAMES: [&str; 4] = ["auv2_tgt1", "auv4_tgt2", "auv6_tgt2", "auv8_tgt3"];

    fn obstacles() -> Vec<Obstacle> {
        vec![
            Obstacle {
                position: [0.45, -0.35, 0.25],
                radius: 0.05,
            },
            Obstacle {
                position: [-0.4, 0.45, -0.25],
                radius: 0.05,
            },
        ]
    }

    pub fn preset(name: &str) -> Result<ScenarioConfig> {
        let (n_auvs, n_targets) = match name {
            "auv2_tgt1" => (2, 1),
            "auv4_tgt2" => (4, 2),
            "auv6_tgt2" => (6, 2),
            "auv8_tgt3" => (8, 3),
            _ => {
                return Err(Error::UnknownPreset {
                    name: name.to_string(),
                    available: PRESET_NAMES.iter().map(|s| s.to_string()).collect(),
                })
            }
        };
        Ok(ScenarioConfig {
            name: name.to_string(),
            n_auvs,
            n_targets,
            obstacles: obstacles(),
            fluid: FluidParams::default(),
            sonar: SonarParams::default(),
            collision: CollisionParams::default(),
            reward: RewardParams::default(),
            world: WorldParams::default(),
            current: CurrentField::default(),
            quality: QualityParams::default(),
            train: TrainOverrides::default(),
        })
    }

    pub fn all() -> Vec<ScenarioConfig> {
        PRESET_NAMES.iter().map(|n| preset(n).unwrap()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_listed_counts() {
        let counts: Vec<_> = presets::all().iter().map(|s| (s.n_auvs, s.n_targets)).collect();
        assert_eq!(counts, vec![(2, 1), (4, 2), (6, 2), (8, 3)]);
        for s in presets::all() {
            s.validate().unwrap();
        }
    }

    #[test]
    fn unknown_preset_lists_available() {
        let err = presets::preset("auv3_tgt9").unwrap_err().to_string();
        for n in presets::PRESET_NAMES {
            assert!(err.contains(n));
        }
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let s = presets::preset("auv6_tgt2").unwrap();
        let back = ScenarioConfig::from_json(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);

        let minimal = ScenarioConfig::from_json(r#"{"name":"m","n_auvs":4,"n_targets":1}"#).unwrap();
        assert_eq!(minimal.fluid, FluidParams::default());
        assert!(minimal.obstacles.is_empty());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"name":"m","n_auvs":2,"n_targets":1,"bogus":1}"#).is_err());
        assert!(ScenarioConfig::from_json(
            r#"{"name":"m","n_auvs":2,"n_targets":1,"fluid":{"dencity":3}}"#
        )
        .is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"name":"m","n_auvs":5,"n_targets":1}"#).is_err());
        assert!(ScenarioConfig::from_json(
            r#"{"name":"m","n_auvs":2,"n_targets":1,"fluid":{"density":-1}}"#
        )
        .is_err());
        assert!(ScenarioConfig::from_json(
            r#"{"name":"m","n_auvs":2,"n_targets":1,"reward":{"proximity_modulator":1.0}}"#
        )
        .is_err());
    }
}
