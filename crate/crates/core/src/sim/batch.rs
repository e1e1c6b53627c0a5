use std::path::Path;

use serde::{Deserialize, Serialize};

use super::episode::run_episode;
use super::log::{median, write_atomic, FlightLog, Metrics};
use super::maps::MapSpec;
use super::scenario::Scenario;
use crate::config::PlannerConfig;
use crate::error::{PlannerError, Result};
use crate::parallel::Execution;

/// Paired runs that differ only in the risk-weight term.
#[derive(Debug, Clone)]
pub struct Ablation {
    pub on: (FlightLog, Metrics),
    pub off: (FlightLog, Metrics),
}

/// Runs `scenario` with the configured risk weight and with it disabled.
pub fn ablate_easa(scenario: &Scenario, config: &PlannerConfig, execution: Execution) -> Result<Ablation> {
    let configs = vec![config.clone(), config.without_easa()];
    let mut runs = execution.map(configs, |c| run_episode(scenario, &c)).into_iter();
    let on = runs.next().expect("two runs")?;
    let off = runs.next().expect("two runs")?;
    Ok(Ablation { on, off })
}

/// Runs `scenario` once per seed, keeping results in seed order.
pub fn run_seeds(
    scenario: &Scenario,
    config: &PlannerConfig,
    seeds: &[u64],
    execution: Execution,
) -> Vec<Result<Metrics>> {
    let jobs: Vec<u64> = seeds.to_vec();
    execution.map(jobs, |seed| {
        let s = Scenario {
            seed,
            ..scenario.clone()
        };
        run_episode(&s, config).map(|(_, m)| m)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Forest obstacle density in obstacles per m².
    Density,
    /// Risk-weight sharpness.
    Alpha,
    /// Weight of the risk-weighted speed term.
    EasaWeight,
    /// Per-axis speed limit.
    VMax,
    /// Gate opening width.
    Opening,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Density => "density",
            SweepParameter::Alpha => "alpha",
            SweepParameter::EasaWeight => "easa_weight",
            SweepParameter::VMax => "v_max",
            SweepParameter::Opening => "opening",
        }
    }

    /// Copies of `scenario` and `config` with the parameter set to `value`.
    pub fn apply(
        self,
        scenario: &Scenario,
        config: &PlannerConfig,
        value: f64,
    ) -> std::result::Result<(Scenario, PlannerConfig), String> {
        let mut s = scenario.clone();
        let mut c = config.clone();
        match self {
            SweepParameter::Density => match &mut s.map {
                MapSpec::Forest(f) => f.density = value,
                _ => return Err("density sweeps need a forest map".into()),
            },
            SweepParameter::Alpha => c.easa.alpha = value,
            SweepParameter::EasaWeight => c.high_mpcc.lambda[2] = value,
            SweepParameter::VMax => s.v_max = value,
            SweepParameter::Opening => match &mut s.map {
                MapSpec::Gate(g) => g.opening = value,
                MapSpec::SuddenObstacle(o) => o.gate.opening = value,
                _ => return Err("opening sweeps need a gate map".into()),
            },
        }
        s.validate()?;
        c.validate()?;
        Ok((s, c))
    }
}

/// A parameter grid: every value is run with `seeds` consecutive seeds
/// starting at `first_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default)]
    pub first_seed: u64,
}

fn default_seeds() -> u64 {
    1
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| PlannerError::Config(e.to_string()))?;
        s.validate().map_err(PlannerError::Config)?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| PlannerError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.values.is_empty() {
            return Err("sweep needs at least one value".into());
        }
        if self.seeds == 0 {
            return Err("sweep needs at least one seed".into());
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(format!("sweep value {v} is not finite"));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<(usize, u64)> {
        (0..self.values.len())
            .flat_map(|i| (0..self.seeds).map(move |k| (i, self.first_seed + k)))
            .collect()
    }
}

/// One sweep cell. Exactly one of `metrics` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

/// Aggregates for one parameter value. Medians are over successful runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub value: f64,
    pub runs: usize,
    pub successes: usize,
    pub collisions: usize,
    pub errors: usize,
    pub median_flight_time: Option<f64>,
    pub median_min_zone_speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
}

impl SweepResult {
    fn summarise(parameter: SweepParameter, values: &[f64], rows: Vec<SweepRow>) -> Self {
        let summary = values
            .iter()
            .map(|&value| {
                let cell: Vec<&SweepRow> = rows.iter().filter(|r| r.value == value).collect();
                let ok: Vec<&Metrics> = cell
                    .iter()
                    .filter_map(|r| r.metrics.as_ref())
                    .filter(|m| m.success)
                    .collect();
                let times: Vec<f64> = ok.iter().map(|m| m.flight_time).collect();
                let zone: Vec<f64> = ok
                    .iter()
                    .filter_map(|m| m.gate_zone)
                    .map(|z| z.min_zone_speed)
                    .collect();
                SweepSummary {
                    value,
                    runs: cell.len(),
                    successes: ok.len(),
                    collisions: cell
                        .iter()
                        .filter_map(|r| r.metrics.as_ref())
                        .filter(|m| m.collided)
                        .count(),
                    errors: cell.iter().filter(|r| r.error.is_some()).count(),
                    median_flight_time: median(&times),
                    median_min_zone_speed: median(&zone),
                }
            })
            .collect();
        Self {
            parameter,
            rows,
            summary,
        }
    }

    /// One line per cell.
    pub fn rows_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            self.parameter.name(),
            "seed",
            "success",
            "collided",
            "flight_time",
            "path_length",
            "min_clearance",
            "max_speed",
            "min_zone_speed",
            "error",
        ])
        .expect("writing to memory");
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            let m = r.metrics.as_ref();
            w.write_record([
                r.value.to_string(),
                r.seed.to_string(),
                m.map_or(String::new(), |m| m.success.to_string()),
                m.map_or(String::new(), |m| m.collided.to_string()),
                opt(m.map(|m| m.flight_time)),
                opt(m.map(|m| m.path_length)),
                opt(m.map(|m| m.min_clearance)),
                opt(m.map(|m| m.max_speed)),
                opt(m.and_then(|m| m.gate_zone).map(|z| z.min_zone_speed)),
                r.error.clone().unwrap_or_default(),
            ])
            .expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv is utf-8")
    }

    /// One line per parameter value.
    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            self.parameter.name(),
            "runs",
            "successes",
            "collisions",
            "errors",
            "median_flight_time",
            "median_min_zone_speed",
        ])
        .expect("writing to memory");
        for s in &self.summary {
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            w.write_record([
                s.value.to_string(),
                s.runs.to_string(),
                s.successes.to_string(),
                s.collisions.to_string(),
                s.errors.to_string(),
                opt(s.median_flight_time),
                opt(s.median_min_zone_speed),
            ])
            .expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv is utf-8")
    }
}

/// Runs every cell of `spec`. A failing cell is recorded and the sweep
/// continues. With `out`, each cell's metrics are written atomically to
/// `cell_<value index>_seed_<seed>.json` as soon as the cell finishes.
pub fn run_sweep(
    spec: &SweepSpec,
    scenario: &Scenario,
    config: &PlannerConfig,
    execution: Execution,
    out: Option<&Path>,
) -> Result<SweepResult> {
    spec.validate().map_err(PlannerError::Config)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let rows = execution.map(spec.cells(), |(i, seed)| {
        let value = spec.values[i];
        let result = spec
            .parameter
            .apply(scenario, config, value)
            .map_err(PlannerError::Config)
            .and_then(|(s, c)| run_episode(&Scenario { seed, ..s }, &c));
        let mut row = match result {
            Ok((_, m)) => SweepRow {
                value,
                seed,
                metrics: Some(m),
                error: None,
            },
            Err(e) => SweepRow {
                value,
                seed,
                metrics: None,
                error: Some(e.to_string()),
            },
        };
        if let Some(dir) = out {
            let text = serde_json::to_string_pretty(&row).expect("row serialises") + "\n";
            if let Err(e) = write_atomic(&dir.join(format!("cell_{i}_seed_{seed}.json")), &text) {
                row.error.get_or_insert(format!("writing cell: {e}"));
            }
        }
        row
    });
    Ok(SweepResult::summarise(spec.parameter, &spec.values, rows))
}
