//! Guiding path: 26-connected grid A* and uniform arc-length resampling.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{PlannerError, Result};
use crate::grid_esdf::{CellIndex, EsdfField, VoxelGrid};
use crate::Vec3;

/// Cell sequence from start to goal with its Euclidean length in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPath {
    pub cells: Vec<CellIndex>,
    pub cost: f64,
}

impl CellPath {
    pub fn points(&self, grid: &VoxelGrid) -> Vec<Vec3> {
        self.cells
            .iter()
            .map(|&c| grid.geometry().cell_center(c))
            .collect()
    }
}

/// Points spaced uniformly by arc length; the last gap may be shorter.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidePath {
    pub points: Vec<Vec3>,
    pub spacing: f64,
}

impl GuidePath {
    /// The first `segments + 1` points, repeating the final point when the
    /// path is shorter than requested.
    pub fn window(&self, segments: usize) -> Vec<Vec3> {
        let last = *self.points.last().expect("guide paths are never empty");
        (0..=segments)
            .map(|i| self.points.get(i).copied().unwrap_or(last))
            .collect()
    }

    pub fn length(&self) -> f64 {
        polyline_length(&self.points)
    }
}

pub fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Whether `linear` may be entered by a search with the given clearance.
pub fn is_traversable(grid: &VoxelGrid, esdf: &EsdfField, linear: usize, clearance: f64) -> bool {
    !grid.is_occupied_linear(linear) && esdf.distances()[linear] >= clearance
}

/// 26-neighborhood offsets with their lengths in cell units.
pub(crate) fn neighbor_offsets() -> Vec<([i64; 3], f64)> {
    let mut out = Vec::with_capacity(26);
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                let len = ((dx * dx + dy * dy + dz * dz) as f64).sqrt();
                out.push(([dx, dy, dz], len));
            }
        }
    }
    out
}

/// Optimal 26-connected path over cells whose ESDF value is at least
/// `clearance`. Ties in the open list break on `(f, h, linear index)`.
pub fn astar(
    grid: &VoxelGrid,
    esdf: &EsdfField,
    start: &Vec3,
    goal: &Vec3,
    clearance: f64,
) -> Result<CellPath> {
    let geometry = *grid.geometry();
    let start_cell = geometry
        .world_to_cell(start)
        .ok_or(PlannerError::InvalidEndpoint { which: "start" })?;
    let goal_cell = geometry
        .world_to_cell(goal)
        .ok_or(PlannerError::InvalidEndpoint { which: "goal" })?;
    let start_id = geometry.linear_index(start_cell);
    let goal_id = geometry.linear_index(goal_cell);
    if !is_traversable(grid, esdf, start_id, clearance) {
        return Err(PlannerError::InvalidEndpoint { which: "start" });
    }
    if !is_traversable(grid, esdf, goal_id, clearance) {
        return Err(PlannerError::InvalidEndpoint { which: "goal" });
    }

    let res = geometry.resolution;
    let dims = geometry.dims;
    let heuristic = |cell: CellIndex| -> f64 {
        let d: f64 = (0..3)
            .map(|a| {
                let k = cell[a] as f64 - goal_cell[a] as f64;
                k * k
            })
            .sum();
        d.sqrt() * res
    };

    let n = geometry.cell_count();
    let mut g_score = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let offsets = neighbor_offsets();

    g_score[start_id] = 0.0;
    let h0 = heuristic(start_cell);
    open.push(Reverse((Key(h0), Key(h0), start_id)));

    while let Some(Reverse((_, _, current))) = open.pop() {
        if closed[current] {
            continue;
        }
        closed[current] = true;
        if current == goal_id {
            let mut cells = vec![geometry.cell_of(current)];
            let mut at = current;
            while parent[at] != usize::MAX {
                at = parent[at];
                cells.push(geometry.cell_of(at));
            }
            cells.reverse();
            return Ok(CellPath {
                cells,
                cost: g_score[goal_id],
            });
        }
        let cell = geometry.cell_of(current);
        for &(off, len) in &offsets {
            let mut next = [0usize; 3];
            let mut inside = true;
            for a in 0..3 {
                let v = cell[a] as i64 + off[a];
                if v < 0 || v >= dims[a] as i64 {
                    inside = false;
                    break;
                }
                next[a] = v as usize;
            }
            if !inside {
                continue;
            }
            let next_id = geometry.linear_index(next);
            if closed[next_id] || !is_traversable(grid, esdf, next_id, clearance) {
                continue;
            }
            let tentative = g_score[current] + len * res;
            if tentative < g_score[next_id] {
                g_score[next_id] = tentative;
                parent[next_id] = current;
                let h = heuristic(next);
                open.push(Reverse((Key(tentative + h), Key(h), next_id)));
            }
        }
    }
    Err(PlannerError::Unreachable)
}

/// Arc-length resampling with `ceil(length / spacing)` segments. The first and
/// last input points are kept.
pub fn resample(points: &[Vec3], spacing: f64) -> Result<GuidePath> {
    if points.is_empty() {
        return Err(PlannerError::Config("cannot resample an empty path".into()));
    }
    if !(spacing > 0.0) {
        return Err(PlannerError::Config(format!(
            "resample spacing must be positive, got {spacing}"
        )));
    }
    let total = polyline_length(points);
    if points.len() < 2 || total == 0.0 {
        return Ok(GuidePath {
            points: vec![points[0]],
            spacing,
        });
    }
    let segments = ((total / spacing) - 1e-9).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(segments + 1);
    out.push(points[0]);

    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 1..segments {
        let s = k as f64 * spacing;
        loop {
            let len = (points[seg + 1] - points[seg]).norm();
            if s <= seg_start + len || seg + 2 == points.len() {
                let t = if len > 0.0 {
                    ((s - seg_start) / len).min(1.0)
                } else {
                    0.0
                };
                out.push(points[seg] + (points[seg + 1] - points[seg]) * t);
                break;
            }
            seg_start += len;
            seg += 1;
        }
    }
    out.push(*points.last().unwrap());
    Ok(GuidePath { points: out, spacing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_esdf::build_esdf;

    fn open_grid() -> VoxelGrid {
        VoxelGrid::new(Vec3::zeros(), 1.0, [10, 10, 1]).unwrap()
    }

    #[test]
    fn straight_line_on_empty_grid() {
        let grid = open_grid();
        let esdf = build_esdf(&grid);
        let path = astar(
            &grid,
            &esdf,
            &Vec3::new(0.5, 0.5, 0.5),
            &Vec3::new(9.5, 0.5, 0.5),
            0.0,
        )
        .unwrap();
        assert!((path.cost - 9.0).abs() < 1e-12);
        assert_eq!(path.cells.len(), 10);
    }

    #[test]
    fn enclosed_goal_is_unreachable() {
        let mut grid = open_grid();
        for (i, j) in [(6, 6), (7, 6), (8, 6), (6, 7), (8, 7), (6, 8), (7, 8), (8, 8)] {
            grid.set_occupied([i, j, 0], true);
        }
        let esdf = build_esdf(&grid);
        let r = astar(
            &grid,
            &esdf,
            &Vec3::new(0.5, 0.5, 0.5),
            &Vec3::new(7.5, 7.5, 0.5),
            0.0,
        );
        assert!(matches!(r, Err(PlannerError::Unreachable)));
    }

    #[test]
    fn endpoint_inside_inflation() {
        let mut grid = open_grid();
        grid.set_occupied([5, 5, 0], true);
        let esdf = build_esdf(&grid);
        let r = astar(
            &grid,
            &esdf,
            &Vec3::new(5.5, 6.5, 0.5),
            &Vec3::new(0.5, 0.5, 0.5),
            1.5,
        );
        assert!(matches!(r, Err(PlannerError::InvalidEndpoint { which: "start" })));
        let r = astar(
            &grid,
            &esdf,
            &Vec3::new(0.5, 0.5, 0.5),
            &Vec3::new(5.5, 5.5, 0.5),
            0.0,
        );
        assert!(matches!(r, Err(PlannerError::InvalidEndpoint { which: "goal" })));
    }

    #[test]
    fn returned_cells_respect_clearance() {
        let mut grid = VoxelGrid::new(Vec3::zeros(), 0.2, [40, 20, 1]).unwrap();
        grid.fill_where(|p| (p.x - 4.0).powi(2) + (p.y - 2.0).powi(2) < 0.8);
        let esdf = build_esdf(&grid);
        let path = astar(
            &grid,
            &esdf,
            &Vec3::new(0.5, 2.0, 0.1),
            &Vec3::new(7.5, 2.0, 0.1),
            0.6,
        )
        .unwrap();
        assert!(path.cells.iter().all(|&c| esdf.distance_at_cell(c) >= 0.6));
    }

    #[test]
    fn resample_straight() {
        let pts = [Vec3::zeros(), Vec3::new(10.0, 0.0, 0.0)];
        let guide = resample(&pts, 1.0).unwrap();
        assert_eq!(guide.points.len(), 11);
        for (k, p) in guide.points.iter().enumerate() {
            assert!((p.x - k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_l_shape() {
        let pts = [Vec3::zeros(), Vec3::new(3.0, 0.0, 0.0), Vec3::new(3.0, 4.0, 0.0)];
        let guide = resample(&pts, 3.5).unwrap();
        assert_eq!(guide.points.len(), 3);
        assert!((guide.points[1] - Vec3::new(3.0, 0.5, 0.0)).norm() < 1e-12);
        assert_eq!(guide.points[2], Vec3::new(3.0, 4.0, 0.0));
    }

    #[test]
    fn resample_spacing_longer_than_path() {
        let pts = [Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0)];
        let guide = resample(&pts, 10.0).unwrap();
        assert_eq!(guide.points, pts.to_vec());
    }

    #[test]
    fn resample_zero_length() {
        let pts = [Vec3::new(1.0, 2.0, 3.0); 3];
        assert_eq!(resample(&pts, 0.5).unwrap().points.len(), 1);
    }

    #[test]
    fn window_pads_with_last_point() {
        let guide = GuidePath {
            points: vec![Vec3::zeros(), Vec3::x()],
            spacing: 1.0,
        };
        let w = guide.window(3);
        assert_eq!(w.len(), 4);
        assert_eq!(w[3], Vec3::x());
    }
}
