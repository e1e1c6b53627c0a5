use super::{GridGeometry, VoxelGrid};
use crate::error::Result;
use crate::Vec3;

/// True iff every cell traversed by the segment `a → b` is free.
///
/// Amanatides–Woo traversal; a segment passing exactly through a cell corner
/// visits the cells on one side of the corner only.
pub fn raycast_free(grid: &VoxelGrid, a: &Vec3, b: &Vec3) -> Result<bool> {
    let g = grid.geometry();
    let start = g.world_to_cell(a).ok_or_else(|| GridGeometry::out_of_bounds(a))?;
    let end = g.world_to_cell(b).ok_or_else(|| GridGeometry::out_of_bounds(b))?;

    let mut cell = [start[0] as i64, start[1] as i64, start[2] as i64];
    let target = [end[0] as i64, end[1] as i64, end[2] as i64];
    let dir = b - a;
    let res = g.resolution;

    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for axis in 0..3 {
        if dir[axis] > 0.0 {
            step[axis] = 1;
            let boundary = g.origin[axis] + (cell[axis] + 1) as f64 * res;
            t_max[axis] = (boundary - a[axis]) / dir[axis];
            t_delta[axis] = res / dir[axis];
        } else if dir[axis] < 0.0 {
            step[axis] = -1;
            let boundary = g.origin[axis] + cell[axis] as f64 * res;
            t_max[axis] = (boundary - a[axis]) / dir[axis];
            t_delta[axis] = -res / dir[axis];
        }
    }

    let max_steps: i64 = (0..3).map(|k| (target[k] - cell[k]).abs()).sum::<i64>() + 1;
    for _ in 0..=max_steps {
        if grid.is_occupied([cell[0] as usize, cell[1] as usize, cell[2] as usize]) {
            return Ok(false);
        }
        if cell == target {
            return Ok(true);
        }
        let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        if t_max[axis] > 1.0 {
            // Rounding left us short of the end cell; it is adjacent.
            break;
        }
        cell[axis] += step[axis];
        if cell[axis] < 0 || cell[axis] >= g.dims[axis] as i64 {
            break;
        }
        t_max[axis] += t_delta[axis];
    }
    Ok(!grid.is_occupied(end))
}
