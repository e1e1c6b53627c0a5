use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::Vec3;

/// Executed vehicle state at one simulation tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    /// True-map ESDF value at `position`.
    pub clearance: f64,
    /// Risk weight of the executed velocity against the true-map gradient.
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Reference,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Initial,
    Periodic,
    /// The current reference crosses newly sensed obstacles.
    Collision,
    /// The remaining reference is shorter than the control horizon can cover.
    Lookahead,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplanEvent {
    pub t: f64,
    pub layer: Layer,
    pub trigger: Trigger,
    pub iterations: usize,
    pub converged: bool,
    pub solve_ms: f64,
}

pub const LOG_COLUMNS: [&str; 12] = [
    "t",
    "x",
    "y",
    "z",
    "vx",
    "vy",
    "vz",
    "ax",
    "ay",
    "az",
    "clearance",
    "eta",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlightLog {
    pub ticks: Vec<TickRecord>,
    pub events: Vec<ReplanEvent>,
}

impl FlightLog {
    pub fn write_ticks<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LOG_COLUMNS)?;
        for r in &self.ticks {
            let row = [
                r.t,
                r.position.x,
                r.position.y,
                r.position.z,
                r.velocity.x,
                r.velocity.y,
                r.velocity.z,
                r.acceleration.x,
                r.acceleration.y,
                r.acceleration.z,
                r.clearance,
                r.eta,
            ];
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn ticks_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_ticks(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Replan events; solve times are included only with `timing`.
    pub fn events_csv(&self, timing: bool) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t", "layer", "trigger", "iterations", "converged"];
        if timing {
            header.push("solve_ms");
        }
        w.write_record(&header).expect("writing to memory");
        for e in &self.events {
            let layer = match e.layer {
                Layer::Reference => "reference",
                Layer::Control => "control",
            };
            let trigger = serde_json::to_value(e.trigger).expect("trigger serialises");
            let mut row = vec![
                e.t.to_string(),
                layer.to_string(),
                trigger.as_str().unwrap_or_default().to_string(),
                e.iterations.to_string(),
                e.converged.to_string(),
            ];
            if timing {
                row.push(e.solve_ms.to_string());
            }
            w.write_record(&row).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv is utf-8")
    }

    /// Reads the per-tick table written by [`FlightLog::write_ticks`].
    pub fn read_ticks<R: Read>(input: R) -> Result<Vec<TickRecord>> {
        let mut r = csv::Reader::from_reader(input);
        let mut out = Vec::new();
        for row in r.deserialize::<[f64; 12]>() {
            let v = row?;
            out.push(TickRecord {
                t: v[0],
                position: Vec3::new(v[1], v[2], v[3]),
                velocity: Vec3::new(v[4], v[5], v[6]),
                acceleration: Vec3::new(v[7], v[8], v[9]),
                clearance: v[10],
                eta: v[11],
            });
        }
        Ok(out)
    }

    pub fn solve_times(&self, layer: Layer) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.layer == layer)
            .map(|e| e.solve_ms)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub count: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
}

impl SolveStats {
    pub fn from_times(times: &[f64]) -> Self {
        Self {
            count: times.len(),
            mean_ms: if times.is_empty() {
                0.0
            } else {
                times.iter().sum::<f64>() / times.len() as f64
            },
            median_ms: median(times).unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub low: SolveStats,
    pub high: SolveStats,
}

/// Speeds around a point of interest such as a gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneStats {
    pub min_zone_speed: f64,
    pub mean_zone_speed: f64,
    /// Highest speed where the clearance is at least the safe distance.
    pub open_max_speed: f64,
}

/// Mean speed heading into versus away from obstacles, averaged over
/// clearance bands where both occur.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachDepart {
    pub approach_mean: f64,
    pub depart_mean: f64,
    pub matched_bands: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub easa_enabled: bool,
    pub success: bool,
    pub reached_goal: bool,
    pub collided: bool,
    pub failure: Option<String>,
    /// Seconds until the goal was reached or the episode ended.
    pub flight_time: f64,
    pub path_length: f64,
    pub min_clearance: f64,
    pub max_speed: f64,
    pub mean_speed: f64,
    pub max_axis_speed: f64,
    pub max_axis_acceleration: f64,
    pub map_retries: usize,
    pub reference_replans: usize,
    pub control_replans: usize,
    pub unconverged_solves: usize,
    pub gate_zone: Option<ZoneStats>,
    pub approach_depart: Option<ApproachDepart>,
    /// Present only when timing was requested, since wall-clock values
    /// differ between otherwise identical runs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing: Option<Timing>,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialise");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Writes `contents` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
