use nalgebra::Matrix3;

use super::{CellIndex, GridGeometry, VoxelGrid};
use crate::error::{PlannerError, Result};
use crate::Vec3;

/// Multiple of the grid diagonal used as the distance of an all-free grid.
const SENTINEL_DIAGONALS: f64 = 10.0;

/// Signed distance per cell center, in meters.
///
/// Free cells hold the distance to the nearest occupied cell center. Occupied
/// cells hold `-(d_free - resolution)`, where `d_free` is the distance to the
/// nearest free cell center, so boundary obstacle cells read exactly zero and
/// the field stays continuous across the obstacle surface.
#[derive(Debug, Clone)]
pub struct EsdfField {
    geometry: GridGeometry,
    distance: Vec<f64>,
}

/// Interpolated distance with its derivatives at a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsdfQuery {
    pub value: f64,
    pub gradient: Vec3,
    /// Per-axis second derivative `∂²c/∂μ²`.
    pub second_derivative: Vec3,
    /// Full Hessian of the interpolant, including mixed partials.
    pub hessian: Matrix3<f64>,
}

/// Squared distance, in cell units, from every cell center to the nearest cell
/// whose occupancy equals `target`. Cells with no such target read `f64::INFINITY`.
///
/// Separable lower-envelope transform, one pass per axis.
pub fn squared_distance_transform(grid: &VoxelGrid, target: bool) -> Vec<f64> {
    let geometry = *grid.geometry();
    let mut field: Vec<f64> = grid
        .occupancy()
        .iter()
        .map(|&o| if o == target { 0.0 } else { f64::INFINITY })
        .collect();

    let dims = geometry.dims;
    let strides = [1, dims[0], dims[0] * dims[1]];
    let longest = *dims.iter().max().unwrap_or(&1);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut sites = Vec::with_capacity(longest);
    let mut bounds = Vec::with_capacity(longest + 1);

    for axis in 0..3 {
        let n = dims[axis];
        if n == 1 {
            continue;
        }
        let stride = strides[axis];
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        for b in 0..dims[others[1]] {
            for a in 0..dims[others[0]] {
                let base = a * strides[others[0]] + b * strides[others[1]];
                for q in 0..n {
                    line[q] = field[base + q * stride];
                }
                lower_envelope(&line[..n], &mut out[..n], &mut sites, &mut bounds);
                for q in 0..n {
                    field[base + q * stride] = out[q];
                }
            }
        }
    }
    field
}

/// 1D squared-distance transform over the finite samples of `f`.
fn lower_envelope(f: &[f64], out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        let qf = q as f64;
        let mut s = f64::NEG_INFINITY;
        while let Some(&v) = sites.last() {
            let vf = v as f64;
            s = ((fq + qf * qf) - (f[v] + vf * vf)) / (2.0 * qf - 2.0 * vf);
            if s <= *bounds.last().unwrap() {
                sites.pop();
                bounds.pop();
            } else {
                break;
            }
        }
        if sites.is_empty() {
            s = f64::NEG_INFINITY;
        }
        sites.push(q);
        bounds.push(s);
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < sites.len() && bounds[k + 1] < qf {
            k += 1;
        }
        let v = sites[k] as f64;
        *o = (qf - v) * (qf - v) + f[sites[k]];
    }
}

/// Exact Euclidean distance transform of `grid` over cell centers.
pub fn build_esdf(grid: &VoxelGrid) -> EsdfField {
    let geometry = *grid.geometry();
    let res = geometry.resolution;
    let sentinel = SENTINEL_DIAGONALS * geometry.diagonal();
    let to_occupied = squared_distance_transform(grid, true);
    let to_free = squared_distance_transform(grid, false);

    let distance = grid
        .occupancy()
        .iter()
        .enumerate()
        .map(|(i, &occupied)| {
            if occupied {
                let d2 = to_free[i];
                if d2.is_finite() {
                    -(d2.sqrt() - 1.0) * res
                } else {
                    -sentinel
                }
            } else {
                let d2 = to_occupied[i];
                if d2.is_finite() {
                    d2.sqrt() * res
                } else {
                    sentinel
                }
            }
        })
        .collect();
    EsdfField { geometry, distance }
}

/// Catmull-Rom weights and their first two derivatives along one axis.
#[derive(Debug, Clone, Copy)]
struct AxisStencil {
    first: usize,
    count: usize,
    w: [f64; 4],
    dw: [f64; 4],
    ddw: [f64; 4],
}

impl AxisStencil {
    fn flat(node: usize) -> Self {
        Self {
            first: node,
            count: 1,
            w: [1.0, 0.0, 0.0, 0.0],
            dw: [0.0; 4],
            ddw: [0.0; 4],
        }
    }

    fn cubic(first: usize, t: f64, inv_res: f64) -> Self {
        let t2 = t * t;
        let t3 = t2 * t;
        let w = [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ];
        let dw = [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0) * inv_res,
            0.5 * (9.0 * t2 - 10.0 * t) * inv_res,
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0) * inv_res,
            0.5 * (3.0 * t2 - 2.0 * t) * inv_res,
        ];
        let s = inv_res * inv_res;
        let ddw = [
            (2.0 - 3.0 * t) * s,
            (9.0 * t - 5.0) * s,
            (4.0 - 9.0 * t) * s,
            (3.0 * t - 1.0) * s,
        ];
        Self {
            first,
            count: 4,
            w,
            dw,
            ddw,
        }
    }
}

impl EsdfField {
    /// Wraps precomputed distances; used for tests and for loading dumps.
    pub fn from_distances(geometry: GridGeometry, distance: Vec<f64>) -> Result<Self> {
        if distance.len() != geometry.cell_count() {
            return Err(PlannerError::InvalidGrid(format!(
                "distance has {} cells, geometry needs {}",
                distance.len(),
                geometry.cell_count()
            )));
        }
        Ok(Self { geometry, distance })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn distances(&self) -> &[f64] {
        &self.distance
    }

    pub fn distance_at_cell(&self, cell: CellIndex) -> f64 {
        self.distance[self.geometry.linear_index(cell)]
    }

    /// Box in which [`EsdfField::query`] succeeds: between the centers of the
    /// second and second-to-last cell of each interpolated axis.
    pub fn valid_box(&self) -> (Vec3, Vec3) {
        let g = &self.geometry;
        let mut lo = Vec3::zeros();
        let mut hi = Vec3::zeros();
        for axis in 0..3 {
            let n = g.dims[axis];
            if n == 1 {
                lo[axis] = f64::NEG_INFINITY;
                hi[axis] = f64::INFINITY;
            } else {
                lo[axis] = g.origin[axis] + 1.5 * g.resolution;
                hi[axis] = g.origin[axis] + (n as f64 - 1.5) * g.resolution;
            }
        }
        (lo, hi)
    }

    /// Clamps `p` into [`EsdfField::valid_box`].
    pub fn clamp_to_valid(&self, p: &Vec3) -> Vec3 {
        let (lo, hi) = self.valid_box();
        Vec3::new(
            p.x.clamp(lo.x, hi.x),
            p.y.clamp(lo.y, hi.y),
            p.z.clamp(lo.z, hi.z),
        )
    }

    /// Distance from `p` to the nearest node plane of an interpolated axis.
    /// Second derivatives of the interpolant jump across these planes, and
    /// the valid-box faces are among them.
    pub fn seam_distance(&self, p: &Vec3) -> f64 {
        let g = &self.geometry;
        (0..3)
            .filter(|&axis| g.dims[axis] >= 4)
            .map(|axis| {
                let u = (p[axis] - g.origin[axis]) / g.resolution - 0.5;
                (u - u.round()).abs() * g.resolution
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn stencil(&self, axis: usize, coord: f64, clamp: bool) -> Option<(AxisStencil, bool)> {
        let g = &self.geometry;
        let n = g.dims[axis];
        if n == 1 {
            return Some((AxisStencil::flat(0), false));
        }
        let inv_res = 1.0 / g.resolution;
        let u = (coord - g.origin[axis]) * inv_res - 0.5;
        if !u.is_finite() {
            return None;
        }
        if n < 4 {
            return clamp.then(|| {
                let node = u.round().clamp(0.0, (n - 1) as f64) as usize;
                (AxisStencil::flat(node), true)
            });
        }
        let upper = (n - 2) as f64;
        let (u, clamped) = if u < 1.0 || u > upper {
            if !clamp {
                return None;
            }
            (u.clamp(1.0, upper), true)
        } else {
            (u, false)
        };
        let mut i0 = u.floor() as usize;
        if i0 + 2 > n - 1 {
            i0 = n - 3;
        }
        let t = u - i0 as f64;
        Some((AxisStencil::cubic(i0 - 1, t, inv_res), clamped))
    }

    /// Tricubic Catmull-Rom interpolation of distance, gradient and Hessian.
    pub fn query(&self, p: &Vec3) -> Result<EsdfQuery> {
        let mut stencils = [AxisStencil::flat(0); 3];
        for axis in 0..3 {
            match self.stencil(axis, p[axis], false) {
                Some((s, _)) => stencils[axis] = s,
                None => return Err(GridGeometry::out_of_bounds(p)),
            }
        }
        Ok(self.evaluate(&stencils))
    }

    /// Interpolates at `p` clamped into the valid box. Derivatives along clamped
    /// axes are zero, so the result is the exact derivative of `c(clamp(p))`.
    pub fn query_clamped(&self, p: &Vec3) -> EsdfQuery {
        let mut stencils = [AxisStencil::flat(0); 3];
        let mut clamped = [false; 3];
        for axis in 0..3 {
            let coord = if p[axis].is_finite() {
                p[axis]
            } else {
                self.geometry.origin[axis]
            };
            let (s, c) = self
                .stencil(axis, coord, true)
                .expect("clamped stencil always exists");
            stencils[axis] = s;
            clamped[axis] = c;
        }
        let mut q = self.evaluate(&stencils);
        for axis in 0..3 {
            if clamped[axis] {
                q.gradient[axis] = 0.0;
                q.second_derivative[axis] = 0.0;
                for k in 0..3 {
                    q.hessian[(axis, k)] = 0.0;
                    q.hessian[(k, axis)] = 0.0;
                }
            }
        }
        q
    }

    fn evaluate(&self, s: &[AxisStencil; 3]) -> EsdfQuery {
        let g = &self.geometry;
        let [sx, sy, sz] = s;
        let mut value = 0.0;
        let mut grad = [0.0; 3];
        let mut hess = [0.0; 6]; // xx yy zz xy xz yz
        for c in 0..sz.count {
            let kz = sz.first + c;
            for b in 0..sy.count {
                let ky = sy.first + b;
                let row = g.dims[0] * (ky + g.dims[1] * kz);
                let (wy, dwy, ddwy) = (sy.w[b], sy.dw[b], sy.ddw[b]);
                let (wz, dwz, ddwz) = (sz.w[c], sz.dw[c], sz.ddw[c]);
                for a in 0..sx.count {
                    let d = self.distance[row + sx.first + a];
                    let (wx, dwx, ddwx) = (sx.w[a], sx.dw[a], sx.ddw[a]);
                    value += wx * wy * wz * d;
                    grad[0] += dwx * wy * wz * d;
                    grad[1] += wx * dwy * wz * d;
                    grad[2] += wx * wy * dwz * d;
                    hess[0] += ddwx * wy * wz * d;
                    hess[1] += wx * ddwy * wz * d;
                    hess[2] += wx * wy * ddwz * d;
                    hess[3] += dwx * dwy * wz * d;
                    hess[4] += dwx * wy * dwz * d;
                    hess[5] += wx * dwy * dwz * d;
                }
            }
        }
        let hessian = Matrix3::new(
            hess[0], hess[3], hess[4], //
            hess[3], hess[1], hess[5], //
            hess[4], hess[5], hess[2],
        );
        EsdfQuery {
            value,
            gradient: Vec3::new(grad[0], grad[1], grad[2]),
            second_derivative: Vec3::new(hess[0], hess[1], hess[2]),
            hessian,
        }
    }
}
