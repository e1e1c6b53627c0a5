//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use adaptive_mpcc::global_path::is_traversable;
use adaptive_mpcc::grid_esdf::{EsdfField, VoxelGrid};
use adaptive_mpcc::Vec3;
use rand::Rng;

/// Signed distance by exhaustive search over all cell pairs, with the same
/// conventions as the fast transform.
pub fn brute_force_esdf(grid: &VoxelGrid) -> Vec<f64> {
    let g = grid.geometry();
    let n = g.cell_count();
    let occupied: Vec<[f64; 3]> = (0..n)
        .filter(|&i| grid.is_occupied_linear(i))
        .map(|i| g.cell_of(i).map(|c| c as f64))
        .collect();
    let free: Vec<[f64; 3]> = (0..n)
        .filter(|&i| !grid.is_occupied_linear(i))
        .map(|i| g.cell_of(i).map(|c| c as f64))
        .collect();
    let sentinel = 10.0 * g.diagonal();
    let nearest = |c: [f64; 3], set: &[[f64; 3]]| {
        set.iter()
            .map(|t| (0..3).map(|a| (c[a] - t[a]).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    };
    (0..n)
        .map(|i| {
            let c = g.cell_of(i).map(|c| c as f64);
            if grid.is_occupied_linear(i) {
                let d2 = nearest(c, &free);
                if d2.is_finite() {
                    -(d2.sqrt() - 1.0) * g.resolution
                } else {
                    -sentinel
                }
            } else {
                let d2 = nearest(c, &occupied);
                if d2.is_finite() {
                    d2.sqrt() * g.resolution
                } else {
                    sentinel
                }
            }
        })
        .collect()
}

/// Shortest 26-connected path cost over traversable cells, without a
/// heuristic.
pub fn dijkstra_cost(
    grid: &VoxelGrid,
    esdf: &EsdfField,
    start: usize,
    goal: usize,
    clearance: f64,
) -> Option<f64> {
    let g = grid.geometry();
    let dims = g.dims;
    let mut dist = vec![f64::INFINITY; g.cell_count()];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(Reverse((ordered(0.0), start)));
    while let Some(Reverse((d, i))) = heap.pop() {
        let d = f64::from_bits(d);
        if d > dist[i] {
            continue;
        }
        if i == goal {
            return Some(d);
        }
        let c = g.cell_of(i);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let off = [dx, dy, dz];
                    if off == [0, 0, 0] {
                        continue;
                    }
                    let mut next = [0usize; 3];
                    let mut inside = true;
                    for a in 0..3 {
                        let v = c[a] as i64 + off[a];
                        inside &= v >= 0 && v < dims[a] as i64;
                        next[a] = v.max(0) as usize;
                    }
                    if !inside {
                        continue;
                    }
                    let j = g.linear_index(next);
                    if !is_traversable(grid, esdf, j, clearance) {
                        continue;
                    }
                    let step = ((dx * dx + dy * dy + dz * dz) as f64).sqrt() * g.resolution;
                    if d + step < dist[j] {
                        dist[j] = d + step;
                        heap.push(Reverse((ordered(d + step), j)));
                    }
                }
            }
        }
    }
    None
}

/// Bit pattern that orders like the non-negative float it encodes.
fn ordered(x: f64) -> u64 {
    x.to_bits()
}

/// Grid with random dimensions up to `max_dim` per axis and random fill.
pub fn random_grid<R: Rng>(rng: &mut R, max_dim: usize, max_fill: f64) -> VoxelGrid {
    let dims = [
        rng.random_range(1..=max_dim),
        rng.random_range(1..=max_dim),
        rng.random_range(1..=max_dim),
    ];
    let resolution = rng.random_range(0.05..1.0);
    let mut grid = VoxelGrid::new(Vec3::new(-1.0, 2.0, 0.5), resolution, dims).expect("valid grid");
    fill_random(rng, &mut grid, max_fill);
    grid
}

pub fn fill_random<R: Rng>(rng: &mut R, grid: &mut VoxelGrid, max_fill: f64) {
    let fill = rng.random_range(0.0..max_fill);
    let g = *grid.geometry();
    for i in 0..g.cell_count() {
        if rng.random_bool(fill) {
            grid.set_occupied(g.cell_of(i), true);
        }
    }
}

/// Uniformly random rotation from a normalised quaternion.
pub fn random_rotation<R: Rng>(rng: &mut R) -> nalgebra::Rotation3<f64> {
    loop {
        let q = nalgebra::Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if q.norm() > 0.1 && q.norm() <= 1.0 {
            return nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        }
    }
}

pub fn random_vec<R: Rng>(rng: &mut R, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}
