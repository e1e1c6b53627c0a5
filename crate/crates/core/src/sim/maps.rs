//! Deterministic benchmark maps.
//!
//! All generated maps are single-layer grids at flight altitude: obstacles
//! are vertical extrusions, so every planner layer sees a planar problem.

use std::collections::VecDeque;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PlannerError, Result};
use crate::global_path::{astar, neighbor_offsets};
use crate::grid_esdf::map_file::load_map;
use crate::grid_esdf::{build_esdf, VoxelGrid};
use crate::Vec3;

/// Altitude of the single generated layer.
pub const FLIGHT_ALTITUDE: f64 = 1.0;

/// Regenerations allowed before a forest is reported as infeasible.
pub const MAX_MAP_RETRIES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum MapSpec {
    Forest(ForestSpec),
    Gate(GateSpec),
    Corridor(CorridorSpec),
    Loop(LoopSpec),
    SuddenObstacle(SuddenObstacleSpec),
    File { path: PathBuf },
}

/// Random vertical cylinders over a `length × width` strip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestSpec {
    /// Obstacles per square meter.
    pub density: f64,
    pub length: f64,
    pub width: f64,
    /// Cylinder radius range in meters.
    pub radius: [f64; 2],
    /// No obstacle comes closer than this to the start or goal.
    pub exclusion: f64,
    pub resolution: f64,
}

impl Default for ForestSpec {
    fn default() -> Self {
        Self {
            density: 0.16,
            length: 40.0,
            width: 5.0,
            radius: [0.1, 0.2],
            exclusion: 1.0,
            resolution: 0.1,
        }
    }
}

impl ForestSpec {
    /// `⌊density · area⌋`.
    pub fn obstacle_count(&self) -> usize {
        (self.density * self.length * self.width + 1e-9).floor() as usize
    }
}

/// A wall across the arena at `gate_x` with one opening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateSpec {
    pub length: f64,
    pub width: f64,
    pub gate_x: f64,
    /// Opening width in meters.
    pub opening: f64,
    /// Lateral position of the opening center.
    pub offset: f64,
    pub thickness: f64,
    pub resolution: f64,
}

impl Default for GateSpec {
    fn default() -> Self {
        Self {
            length: 20.0,
            width: 5.0,
            gate_x: 10.0,
            opening: 0.8,
            offset: 0.0,
            thickness: 0.2,
            resolution: 0.1,
        }
    }
}

impl GateSpec {
    pub fn center(&self) -> Vec3 {
        Vec3::new(self.gate_x, self.offset, FLIGHT_ALTITUDE)
    }
}

/// Two blocks leaving a straight passage of `passage` width around `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorridorSpec {
    pub length: f64,
    pub width: f64,
    pub corridor_start: f64,
    pub corridor_length: f64,
    pub passage: f64,
    pub resolution: f64,
}

impl Default for CorridorSpec {
    fn default() -> Self {
        Self {
            length: 20.0,
            width: 5.0,
            corridor_start: 8.0,
            corridor_length: 3.0,
            passage: 1.2,
            resolution: 0.1,
        }
    }
}

/// Ring-shaped wall with an open center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopSpec {
    pub length: f64,
    pub width: f64,
    pub center_x: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub resolution: f64,
}

impl Default for LoopSpec {
    fn default() -> Self {
        Self {
            length: 20.0,
            width: 10.0,
            center_x: 10.0,
            inner_radius: 2.0,
            outer_radius: 2.3,
            resolution: 0.1,
        }
    }
}

/// A gate followed by a pillar that the gate wall hides on approach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuddenObstacleSpec {
    pub gate: GateSpec,
    /// Distance of the pillar behind the wall.
    pub distance: f64,
    /// Lateral pillar offset from the opening center.
    pub lateral: f64,
    pub radius: f64,
    /// Uniform jitter applied to the pillar position per seed.
    pub jitter: f64,
}

impl Default for SuddenObstacleSpec {
    fn default() -> Self {
        Self {
            gate: GateSpec {
                opening: 1.0,
                ..GateSpec::default()
            },
            distance: 1.2,
            lateral: 0.0,
            radius: 0.25,
            jitter: 0.4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedMap {
    pub grid: VoxelGrid,
    /// Regenerations needed to connect start and goal.
    pub retries: usize,
}

fn arena(length: f64, width: f64, resolution: f64) -> Result<VoxelGrid> {
    let nx = (length / resolution).round() as usize;
    let ny = (width / resolution).round() as usize;
    VoxelGrid::new(
        Vec3::new(0.0, -width / 2.0, FLIGHT_ALTITUDE - resolution / 2.0),
        resolution,
        [nx, ny, 1],
    )
}

fn gate_wall(grid: &mut VoxelGrid, g: &GateSpec) {
    grid.fill_where(|p| {
        (p.x - g.gate_x).abs() <= g.thickness / 2.0 && (p.y - g.offset).abs() > g.opening / 2.0
    });
}

fn disk(grid: &mut VoxelGrid, center: (f64, f64), radius: f64) {
    grid.fill_where(|p| (p.x - center.0).powi(2) + (p.y - center.1).powi(2) <= radius * radius);
}

/// True when a collision-free 26-connected path joins the two points.
pub fn connected(grid: &VoxelGrid, a: &Vec3, b: &Vec3) -> bool {
    let geometry = grid.geometry();
    let (Some(ca), Some(cb)) = (geometry.world_to_cell(a), geometry.world_to_cell(b)) else {
        return false;
    };
    if grid.is_occupied(ca) || grid.is_occupied(cb) {
        return false;
    }
    let labels = free_components(grid, None);
    labels[geometry.linear_index(ca)] == labels[geometry.linear_index(cb)]
}

/// Labels 26-connected components of free cells, optionally restricted to
/// cells accepted by `mask`. Rejected and occupied cells get `usize::MAX`.
pub fn free_components(grid: &VoxelGrid, mask: Option<&dyn Fn(&Vec3) -> bool>) -> Vec<usize> {
    let geometry = *grid.geometry();
    let n = geometry.cell_count();
    let mut label = vec![usize::MAX; n];
    let allowed = |id: usize| {
        !grid.is_occupied_linear(id) && mask.is_none_or(|m| m(&geometry.cell_center(geometry.cell_of(id))))
    };
    let offsets = neighbor_offsets();
    let mut next = 0;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if label[seed] != usize::MAX || !allowed(seed) {
            continue;
        }
        label[seed] = next;
        queue.push_back(seed);
        while let Some(id) = queue.pop_front() {
            let c = geometry.cell_of(id);
            for (off, _) in &offsets {
                let mut nb = [0usize; 3];
                let mut inside = true;
                for a in 0..3 {
                    let v = c[a] as isize + off[a] as isize;
                    if v < 0 || v >= geometry.dims[a] as isize {
                        inside = false;
                        break;
                    }
                    nb[a] = v as usize;
                }
                if !inside {
                    continue;
                }
                let nid = geometry.linear_index(nb);
                if label[nid] == usize::MAX && allowed(nid) {
                    label[nid] = next;
                    queue.push_back(nid);
                }
            }
        }
        next += 1;
    }
    label
}

/// Number of distinct free components among cells accepted by `mask`.
pub fn component_count(grid: &VoxelGrid, mask: &dyn Fn(&Vec3) -> bool) -> usize {
    let labels = free_components(grid, Some(mask));
    let mut seen: Vec<usize> = labels.into_iter().filter(|&l| l != usize::MAX).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

fn forest(spec: &ForestSpec, start: &Vec3, goal: &Vec3, seed: u64, clearance: f64) -> Result<GeneratedMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = spec.obstacle_count();
    for attempt in 0..=MAX_MAP_RETRIES {
        let mut grid = arena(spec.length, spec.width, spec.resolution)?;
        let mut placed = 0;
        let mut draws = 0;
        while placed < count && draws < 1000 * count.max(1) {
            draws += 1;
            let x = rng.random_range(0.0..spec.length);
            let y = rng.random_range(-spec.width / 2.0..spec.width / 2.0);
            let r = rng.random_range(spec.radius[0]..=spec.radius[1]);
            let near = |p: &Vec3| ((p.x - x).powi(2) + (p.y - y).powi(2)).sqrt() < spec.exclusion + r;
            if near(start) || near(goal) {
                continue;
            }
            disk(&mut grid, (x, y), r);
            placed += 1;
        }
        let esdf = build_esdf(&grid);
        if astar(&grid, &esdf, start, goal, clearance).is_ok() {
            return Ok(GeneratedMap {
                grid,
                retries: attempt,
            });
        }
        log::debug!("forest seed {seed}: attempt {attempt} disconnected, regenerating");
    }
    Err(PlannerError::MapGeneration {
        retries: MAX_MAP_RETRIES,
    })
}

/// Builds the map for `spec`. `clearance` is the guide clearance used to
/// decide whether a random forest connects `start` and `goal`.
pub fn generate_map(
    spec: &MapSpec,
    start: &Vec3,
    goal: &Vec3,
    seed: u64,
    clearance: f64,
) -> Result<GeneratedMap> {
    let grid = match spec {
        MapSpec::Forest(f) => return forest(f, start, goal, seed, clearance),
        MapSpec::Gate(g) => {
            let mut grid = arena(g.length, g.width, g.resolution)?;
            gate_wall(&mut grid, g);
            grid
        }
        MapSpec::Corridor(c) => {
            let mut grid = arena(c.length, c.width, c.resolution)?;
            let x1 = c.corridor_start + c.corridor_length;
            grid.fill_where(|p| p.x >= c.corridor_start && p.x <= x1 && p.y.abs() >= c.passage / 2.0);
            grid
        }
        MapSpec::Loop(l) => {
            let mut grid = arena(l.length, l.width, l.resolution)?;
            grid.fill_where(|p| {
                let r = ((p.x - l.center_x).powi(2) + p.y * p.y).sqrt();
                r >= l.inner_radius && r <= l.outer_radius
            });
            grid
        }
        MapSpec::SuddenObstacle(s) => {
            let g = &s.gate;
            let mut grid = arena(g.length, g.width, g.resolution)?;
            gate_wall(&mut grid, g);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut jitter = || {
                if s.jitter > 0.0 {
                    rng.random_range(-s.jitter..=s.jitter)
                } else {
                    0.0
                }
            };
            let x = g.gate_x + g.thickness / 2.0 + s.distance + jitter();
            let y = g.offset + s.lateral + jitter();
            disk(&mut grid, (x, y), s.radius);
            grid
        }
        MapSpec::File { path } => load_map(path)?,
    };
    Ok(GeneratedMap { grid, retries: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ends() -> (Vec3, Vec3) {
        (
            Vec3::new(1.0, 0.0, FLIGHT_ALTITUDE),
            Vec3::new(39.0, 0.0, FLIGHT_ALTITUDE),
        )
    }

    #[test]
    fn empty_forest() {
        let (s, g) = ends();
        let spec = MapSpec::Forest(ForestSpec {
            density: 0.0,
            ..Default::default()
        });
        let map = generate_map(&spec, &s, &g, 3, 0.3).unwrap();
        assert_eq!(map.grid.occupied_count(), 0);
        assert_eq!(map.grid.dims(), [400, 50, 1]);
    }

    #[test]
    fn forest_obstacle_count() {
        let spec = ForestSpec {
            density: 0.04,
            ..Default::default()
        };
        assert_eq!(spec.obstacle_count(), 8);
        let counts: Vec<usize> = [0.04, 0.16, 0.28, 0.40]
            .iter()
            .map(|&density| ForestSpec { density, ..spec }.obstacle_count())
            .collect();
        assert_eq!(counts, vec![8, 32, 56, 80]);
    }

    #[test]
    fn forest_is_seed_deterministic_and_keeps_ends_clear() {
        let (s, g) = ends();
        let spec = MapSpec::Forest(ForestSpec {
            density: 0.28,
            ..Default::default()
        });
        let a = generate_map(&spec, &s, &g, 11, 0.3).unwrap();
        let b = generate_map(&spec, &s, &g, 11, 0.3).unwrap();
        let c = generate_map(&spec, &s, &g, 12, 0.3).unwrap();
        assert_eq!(a.grid, b.grid);
        assert_ne!(a.grid, c.grid);
        let esdf = build_esdf(&a.grid);
        assert!(esdf.query_clamped(&s).value >= 0.95);
        assert!(esdf.query_clamped(&g).value >= 0.95);
    }

    #[test]
    fn impossible_forest_reports_retries() {
        let (s, g) = ends();
        let spec = MapSpec::Forest(ForestSpec {
            density: 3.0,
            radius: [0.4, 0.5],
            ..Default::default()
        });
        let err = generate_map(&spec, &s, &g, 1, 0.3).unwrap_err();
        assert!(matches!(
            err,
            PlannerError::MapGeneration {
                retries: MAX_MAP_RETRIES
            }
        ));
    }

    #[test]
    fn gate_has_exactly_one_passage() {
        let spec = GateSpec::default();
        let map = generate_map(&MapSpec::Gate(spec), &Vec3::zeros(), &Vec3::zeros(), 0, 0.3).unwrap();
        let in_wall = |p: &Vec3| (p.x - spec.gate_x).abs() <= spec.thickness / 2.0;
        assert_eq!(component_count(&map.grid, &in_wall), 1);
        let free_in_wall = map
            .grid
            .occupancy()
            .iter()
            .enumerate()
            .filter(|&(id, &occ)| {
                let g = map.grid.geometry();
                !occ && in_wall(&g.cell_center(g.cell_of(id)))
            })
            .count();
        assert_eq!(free_in_wall, 8 * 2);
        assert!(connected(
            &map.grid,
            &Vec3::new(1.0, 0.0, 1.0),
            &Vec3::new(19.0, 0.0, 1.0)
        ));
    }

    #[test]
    fn closed_gate_disconnects() {
        let spec = GateSpec {
            opening: 0.0,
            ..Default::default()
        };
        let map = generate_map(&MapSpec::Gate(spec), &Vec3::zeros(), &Vec3::zeros(), 0, 0.3).unwrap();
        assert!(!connected(
            &map.grid,
            &Vec3::new(1.0, 0.0, 1.0),
            &Vec3::new(19.0, 0.0, 1.0)
        ));
    }

    #[test]
    fn loop_center_is_enclosed() {
        let map = generate_map(
            &MapSpec::Loop(LoopSpec::default()),
            &Vec3::zeros(),
            &Vec3::zeros(),
            0,
            0.3,
        )
        .unwrap();
        let centre = Vec3::new(10.0, 0.0, 1.0);
        assert!(!map.grid.is_occupied_at(&centre));
        assert!(!connected(&map.grid, &centre, &Vec3::new(1.0, 0.0, 1.0)));
        assert!(connected(
            &map.grid,
            &Vec3::new(1.0, 0.0, 1.0),
            &Vec3::new(19.0, 0.0, 1.0)
        ));
    }

    #[test]
    fn corridor_forces_the_passage() {
        let spec = CorridorSpec::default();
        let map = generate_map(&MapSpec::Corridor(spec), &Vec3::zeros(), &Vec3::zeros(), 0, 0.3).unwrap();
        assert!(map.grid.is_occupied_at(&Vec3::new(9.5, 1.5, 1.0)));
        assert!(!map.grid.is_occupied_at(&Vec3::new(9.5, 0.0, 1.0)));
        assert!(connected(
            &map.grid,
            &Vec3::new(1.0, 0.0, 1.0),
            &Vec3::new(19.0, 0.0, 1.0)
        ));
    }

    #[test]
    fn sudden_pillar_moves_with_seed() {
        let spec = MapSpec::SuddenObstacle(SuddenObstacleSpec::default());
        let maps: Vec<VoxelGrid> = (0..20)
            .map(|seed| {
                generate_map(&spec, &Vec3::zeros(), &Vec3::zeros(), seed, 0.3)
                    .unwrap()
                    .grid
            })
            .collect();
        let distinct = (0..maps.len())
            .filter(|&i| maps[..i].iter().all(|m| *m != maps[i]))
            .count();
        assert!(distinct >= 15, "{distinct}");
        let reach = 0.4 * 2f64.sqrt() + 0.25;
        for m in &maps {
            let near = (0..=26)
                .flat_map(|i| (0..=26).map(move |j| (i, j)))
                .any(|(i, j)| {
                    let p = Vec3::new(11.3 - 0.65 + 0.05 * i as f64, -0.65 + 0.05 * j as f64, 1.0);
                    (p - Vec3::new(11.3, 0.0, 1.0)).norm() <= reach && m.is_occupied_at(&p)
                });
            assert!(near);
        }
    }

    #[test]
    fn spec_parses_from_toml_with_defaults() {
        let spec: MapSpec = toml::from_str("generator = \"forest\"\ndensity = 0.4\n").unwrap();
        assert_eq!(
            spec,
            MapSpec::Forest(ForestSpec {
                density: 0.4,
                ..Default::default()
            })
        );
        assert!(toml::from_str::<MapSpec>("generator = \"maze\"\n").is_err());
        assert!(toml::from_str::<MapSpec>("generator = \"gate\"\nopenin = 1.0\n").is_err());
    }
}
