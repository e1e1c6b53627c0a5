//! Closed-loop simulation.
//!
//! An ideal triple-integrator vehicle executes the jerk inputs of the latest
//! contouring plan at a fixed tick. The reference layer replans periodically,
//! when the remaining reference runs short, and when newly sensed obstacles
//! block it; the control layer replans every control period from the
//! shifted previous solution.

mod analysis;
mod batch;
mod episode;
mod log;
mod maps;
mod scenario;

use serde::{Deserialize, Serialize};

pub use analysis::{approach_depart, zone_stats, CLEARANCE_BAND};
pub use batch::{
    ablate_easa, run_seeds, run_sweep, Ablation, SweepParameter, SweepResult, SweepRow, SweepSpec,
    SweepSummary,
};
pub use episode::{run_episode, GATE_ZONE_RADIUS};
pub use log::{
    median, write_atomic, ApproachDepart, FlightLog, Layer, Metrics, ReplanEvent, SolveStats, TickRecord,
    Timing, Trigger, ZoneStats, LOG_COLUMNS,
};
pub use maps::{
    component_count, connected, free_components, generate_map, CorridorSpec, ForestSpec, GateSpec,
    GeneratedMap, LoopSpec, MapSpec, SuddenObstacleSpec, FLIGHT_ALTITUDE, MAX_MAP_RETRIES,
};
pub use scenario::{Scenario, Sensing, BUILTIN_SCENARIOS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Integration and collision-check step in seconds.
    pub tick: f64,
    /// Seconds between contouring solves.
    pub control_period: f64,
    /// Seconds between periodic reference solves.
    pub reference_period: f64,
    pub timeout: f64,
    /// Distance to the goal that counts as arrival.
    pub goal_tolerance: f64,
    /// Minimum ESDF value for guide-path cells; halved down to zero when no
    /// path exists.
    pub guide_clearance: f64,
    /// A reference passing closer than this to newly sensed obstacles is
    /// replanned at once.
    pub reference_collision_clearance: f64,
    /// Include wall-clock solve times in the metrics.
    pub record_timing: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tick: 0.01,
            control_period: 0.1,
            reference_period: 2.0,
            timeout: 60.0,
            goal_tolerance: 0.3,
            guide_clearance: 0.3,
            reference_collision_clearance: 0.3,
            record_timing: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let positive = [
            ("tick", self.tick),
            ("control_period", self.control_period),
            ("reference_period", self.reference_period),
            ("timeout", self.timeout),
            ("goal_tolerance", self.goal_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("sim.{name} must be positive, got {v}"));
            }
        }
        if !(self.guide_clearance >= 0.0) || !(self.reference_collision_clearance >= 0.0) {
            return Err("sim clearances must be non-negative".into());
        }
        if self.control_period < self.tick {
            return Err("sim.control_period must be at least one tick".into());
        }
        Ok(())
    }
}
