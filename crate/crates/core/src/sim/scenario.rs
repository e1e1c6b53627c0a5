use std::path::Path;

use serde::{Deserialize, Serialize};

use super::maps::{
    CorridorSpec, ForestSpec, GateSpec, LoopSpec, MapSpec, SuddenObstacleSpec, FLIGHT_ALTITUDE,
};
use crate::config::PlannerConfig;
use crate::error::{PlannerError, Result};
use crate::Vec3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sensing {
    /// The planner knows the full map from the start.
    #[default]
    Full,
    /// Occupied cells become known once within `radius` and in line of sight.
    RangeLimited { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub start: Vec3,
    pub goal: Vec3,
    /// Per-axis speed limit in m/s.
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    /// Per-axis acceleration limit in m/s².
    #[serde(default = "default_a_max")]
    pub a_max: f64,
    pub map: MapSpec,
    #[serde(default)]
    pub sensing: Sensing,
    /// Planner configuration used when none is supplied separately.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner: Option<PlannerConfig>,
}

fn default_v_max() -> f64 {
    3.0
}

fn default_a_max() -> f64 {
    5.0
}

/// Names accepted by [`Scenario::builtin`].
pub const BUILTIN_SCENARIOS: [&str; 6] = ["empty", "forest", "gate", "corridor", "loop", "sudden_obstacle"];

impl Scenario {
    fn straight(name: &str, length: f64, map: MapSpec) -> Self {
        Self {
            name: name.into(),
            seed: 0,
            start: Vec3::new(1.0, 0.0, FLIGHT_ALTITUDE),
            goal: Vec3::new(length - 1.0, 0.0, FLIGHT_ALTITUDE),
            v_max: default_v_max(),
            a_max: default_a_max(),
            map,
            sensing: Sensing::Full,
            planner: None,
        }
    }

    /// Ready-made scenarios for the standard benchmark maps.
    pub fn builtin(name: &str) -> Option<Self> {
        Some(match name {
            "empty" => Self::straight(
                name,
                22.0,
                MapSpec::Forest(ForestSpec {
                    density: 0.0,
                    length: 22.0,
                    ..Default::default()
                }),
            ),
            "forest" => Self::straight(name, 40.0, MapSpec::Forest(ForestSpec::default())),
            "gate" => Self::straight(name, 20.0, MapSpec::Gate(GateSpec::default())),
            "corridor" => Self::straight(name, 20.0, MapSpec::Corridor(CorridorSpec::default())),
            "loop" => Self::straight(name, 20.0, MapSpec::Loop(LoopSpec::default())),
            "sudden_obstacle" => {
                let spec = SuddenObstacleSpec::default();
                let mut s = Self::straight(name, spec.gate.length, MapSpec::SuddenObstacle(spec));
                s.sensing = Sensing::RangeLimited { radius: 4.0 };
                s
            }
            _ => return None,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| PlannerError::Config(e.to_string()))?;
        s.validate().map_err(PlannerError::Config)?;
        Ok(s)
    }

    /// Loads a scenario file, resolving a relative map file path against the
    /// scenario's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::from_toml_str(&text)
            .map_err(|e| PlannerError::Config(format!("{}: {e}", path.display())))?;
        if let MapSpec::File { path: map } = &mut s.map {
            if map.is_relative() {
                if let Some(dir) = path.parent() {
                    *map = dir.join(&*map);
                }
            }
        }
        Ok(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        if !finite(&self.start) || !finite(&self.goal) {
            return Err("start and goal must be finite".into());
        }
        if !(self.v_max > 0.0) || !(self.a_max > 0.0) {
            return Err("v_max and a_max must be positive".into());
        }
        if let Sensing::RangeLimited { radius } = self.sensing {
            if !(radius > 0.0) {
                return Err("sensing radius must be positive".into());
            }
        }
        if let Some(p) = &self.planner {
            p.validate()?;
        }
        Ok(())
    }

    /// `base` with the scenario's speed and acceleration limits applied.
    pub fn planner_config(&self, base: &PlannerConfig) -> PlannerConfig {
        let mut cfg = base.clone();
        let limits = &mut cfg.high_mpcc.limits;
        limits.velocity = [-self.v_max, self.v_max];
        limits.acceleration = [-self.a_max, self.a_max];
        limits.progress_velocity = [0.0, self.v_max];
        cfg
    }

    /// Center of the gate for scenarios that contain one.
    pub fn gate_center(&self) -> Option<Vec3> {
        match &self.map {
            MapSpec::Gate(g) => Some(g.center()),
            MapSpec::SuddenObstacle(s) => Some(s.gate.center()),
            _ => None,
        }
    }
}
