//! Occupancy grids and Euclidean signed distance fields.
//!
//! Cells are addressed `x`-fastest. A cell index `[i, j, k]` has its center at
//! `origin + (index + 0.5) * resolution`.

mod esdf;
pub mod map_file;
mod raycast;

pub use esdf::{build_esdf, EsdfField, EsdfQuery};
pub use raycast::raycast_free;

use crate::error::{PlannerError, Result};
use crate::Vec3;

pub type CellIndex = [usize; 3];

/// Geometry shared by a [`VoxelGrid`] and the [`EsdfField`] built from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub origin: Vec3,
    pub resolution: f64,
    pub dims: [usize; 3],
}

impl GridGeometry {
    pub fn new(origin: Vec3, resolution: f64, dims: [usize; 3]) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(PlannerError::InvalidGrid(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if dims.contains(&0) {
            return Err(PlannerError::InvalidGrid(format!(
                "all dimensions must be at least 1, got {dims:?}"
            )));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(PlannerError::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self {
            origin,
            resolution,
            dims,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn linear_index(&self, cell: CellIndex) -> usize {
        cell[0] + self.dims[0] * (cell[1] + self.dims[1] * cell[2])
    }

    #[inline]
    pub fn cell_of(&self, linear: usize) -> CellIndex {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [linear % nx, (linear / nx) % ny, linear / (nx * ny)]
    }

    pub fn cell_center(&self, cell: CellIndex) -> Vec3 {
        Vec3::new(
            self.origin.x + (cell[0] as f64 + 0.5) * self.resolution,
            self.origin.y + (cell[1] as f64 + 0.5) * self.resolution,
            self.origin.z + (cell[2] as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing `p`, or `None` outside the grid.
    pub fn world_to_cell(&self, p: &Vec3) -> Option<CellIndex> {
        let mut cell = [0usize; 3];
        for axis in 0..3 {
            let u = (p[axis] - self.origin[axis]) / self.resolution;
            if !(u >= 0.0) || u >= self.dims[axis] as f64 {
                return None;
            }
            cell[axis] = u.floor() as usize;
        }
        Some(cell)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.world_to_cell(p).is_some()
    }

    /// Upper corner of the grid box.
    pub fn max_corner(&self) -> Vec3 {
        self.origin
            + Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.resolution
    }

    /// Diagonal length of the grid box.
    pub fn diagonal(&self) -> f64 {
        (self.max_corner() - self.origin).norm()
    }

    pub fn out_of_bounds(p: &Vec3) -> PlannerError {
        PlannerError::OutOfBounds {
            x: p.x,
            y: p.y,
            z: p.z,
        }
    }
}

/// Dense boolean occupancy over a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    geometry: GridGeometry,
    occupancy: Vec<bool>,
}

impl VoxelGrid {
    /// An all-free grid.
    pub fn new(origin: Vec3, resolution: f64, dims: [usize; 3]) -> Result<Self> {
        let geometry = GridGeometry::new(origin, resolution, dims)?;
        Ok(Self {
            occupancy: vec![false; geometry.cell_count()],
            geometry,
        })
    }

    pub fn from_occupancy(geometry: GridGeometry, occupancy: Vec<bool>) -> Result<Self> {
        if occupancy.len() != geometry.cell_count() {
            return Err(PlannerError::InvalidGrid(format!(
                "occupancy has {} cells, geometry needs {}",
                occupancy.len(),
                geometry.cell_count()
            )));
        }
        Ok(Self { geometry, occupancy })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn resolution(&self) -> f64 {
        self.geometry.resolution
    }

    pub fn origin(&self) -> Vec3 {
        self.geometry.origin
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    #[inline]
    pub fn is_occupied(&self, cell: CellIndex) -> bool {
        self.occupancy[self.geometry.linear_index(cell)]
    }

    #[inline]
    pub fn is_occupied_linear(&self, linear: usize) -> bool {
        self.occupancy[linear]
    }

    pub fn set_occupied(&mut self, cell: CellIndex, occupied: bool) {
        let i = self.geometry.linear_index(cell);
        self.occupancy[i] = occupied;
    }

    /// Occupancy at a world point; points outside the grid read as occupied.
    pub fn is_occupied_at(&self, p: &Vec3) -> bool {
        match self.geometry.world_to_cell(p) {
            Some(cell) => self.is_occupied(cell),
            None => true,
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Marks every cell whose center satisfies `inside`.
    pub fn fill_where(&mut self, mut inside: impl FnMut(&Vec3) -> bool) {
        for linear in 0..self.occupancy.len() {
            let center = self.geometry.cell_center(self.geometry.cell_of(linear));
            if inside(&center) {
                self.occupancy[linear] = true;
            }
        }
    }

    /// Marks the outermost cell layer of every axis with more than one cell.
    pub fn fill_border(&mut self) {
        let [nx, ny, nz] = self.geometry.dims;
        for linear in 0..self.occupancy.len() {
            let [i, j, k] = self.geometry.cell_of(linear);
            let on_x = nx > 1 && (i == 0 || i == nx - 1);
            let on_y = ny > 1 && (j == 0 || j == ny - 1);
            let on_z = nz > 1 && (k == 0 || k == nz - 1);
            if on_x || on_y || on_z {
                self.occupancy[linear] = true;
            }
        }
    }
}
