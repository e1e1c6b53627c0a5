//! Reference trajectory layer.
//!
//! Decision variables are per-axis velocity inputs `u_1 … u_M` of a
//! first-order integrator started at the vehicle position. The objective is
//! `κ1 J_s + κ2 J_c + κ3 J_u`: distance to the guiding points, ESDF collision
//! penalty, and input differences.

mod reference;

pub use reference::{ReferencePoint, ReferenceTrajectory};

use serde::{Deserialize, Serialize};

use crate::error::{PlannerError, Result};
use crate::grid_esdf::EsdfField;
use crate::linear_system::{IntegratorModel, StateSequence};
use crate::optimizer::{self, OptimizeOptions, OptimizeReport};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowMpcConfig {
    /// `[κ1, κ2, κ3]`: similarity, collision, smoothness.
    pub kappa: [f64; 3],
    /// `c_thr` in meters.
    pub safe_distance: f64,
    /// Knot spacing in seconds.
    pub dt: f64,
    /// `M`, number of velocity inputs.
    pub horizon: usize,
    /// Nominal speed used to space guiding points, `spacing = speed · dt`.
    pub reference_speed: f64,
}

impl Default for LowMpcConfig {
    fn default() -> Self {
        Self {
            kappa: [1.0, 10.0, 0.1],
            safe_distance: 0.8,
            dt: 0.4,
            horizon: 12,
            reference_speed: 2.0,
        }
    }
}

impl LowMpcConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.kappa.iter().any(|&k| !(k >= 0.0)) {
            return Err("low_mpc.kappa weights must be non-negative".into());
        }
        if !(self.safe_distance > 0.0) {
            return Err("low_mpc.safe_distance must be positive".into());
        }
        if !(self.dt > 0.0) || self.horizon == 0 || !(self.reference_speed > 0.0) {
            return Err("low_mpc.dt, horizon and reference_speed must be positive".into());
        }
        Ok(())
    }

    pub fn guide_spacing(&self) -> f64 {
        self.reference_speed * self.dt
    }
}

/// `F_c(c) = (c − c_thr)²` below the threshold, zero above; returns the value
/// and its derivative with respect to `c`.
#[inline]
pub fn collision_penalty(c: f64, threshold: f64) -> (f64, f64) {
    if c < threshold {
        let d = c - threshold;
        (d * d, 2.0 * d)
    } else {
        (0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LowCostBreakdown {
    pub similarity: f64,
    pub collision: f64,
    pub smoothness: f64,
    pub total: f64,
}

/// Unweighted term values and gradients over the inputs.
#[derive(Debug, Clone)]
pub struct LowTermGradients {
    pub breakdown: LowCostBreakdown,
    pub similarity: Vec<f64>,
    pub collision: Vec<f64>,
    pub smoothness: Vec<f64>,
}

/// Fixed data of one reference optimisation.
#[derive(Debug, Clone)]
pub struct LowMpcProblem<'a> {
    guide: &'a [Vec3],
    esdf: &'a EsdfField,
    start: Vec3,
    config: LowMpcConfig,
    model: IntegratorModel,
}

impl<'a> LowMpcProblem<'a> {
    /// `guide` holds `g_0 … g_M`; `g_0` is replaced by `start`.
    pub fn new(guide: &'a [Vec3], esdf: &'a EsdfField, start: Vec3, config: &LowMpcConfig) -> Result<Self> {
        if guide.len() < 2 {
            return Err(PlannerError::LengthMismatch {
                expected: 2,
                got: guide.len(),
            });
        }
        let model = IntegratorModel::new(1, config.dt, guide.len() - 1)?;
        Ok(Self {
            guide,
            esdf,
            start,
            config: *config,
            model,
        })
    }

    pub fn horizon(&self) -> usize {
        self.model.horizon()
    }

    /// Inputs that reproduce the guide exactly: `u_i = (g_i − g_{i−1}) / dt`.
    pub fn guide_inputs(&self) -> Vec<f64> {
        let m = self.horizon();
        let mut u = vec![0.0; 3 * m];
        for i in 1..=m {
            let prev = if i == 1 { self.start } else { self.guide[i - 1] };
            let d = (self.guide[i] - prev) / self.config.dt;
            for axis in 0..3 {
                u[axis * m + i - 1] = d[axis];
            }
        }
        u
    }

    fn rollouts(&self, inputs: &[f64]) -> Result<[StateSequence; 3]> {
        let m = self.horizon();
        if inputs.len() != 3 * m {
            return Err(PlannerError::LengthMismatch {
                expected: 3 * m,
                got: inputs.len(),
            });
        }
        Ok([
            self.model.rollout(&[self.start.x], &inputs[..m])?,
            self.model.rollout(&[self.start.y], &inputs[m..2 * m])?,
            self.model.rollout(&[self.start.z], &inputs[2 * m..])?,
        ])
    }

    /// Knot positions `p_0 … p_M` produced by `inputs`.
    pub fn positions(&self, inputs: &[f64]) -> Result<Vec<Vec3>> {
        let axes = self.rollouts(inputs)?;
        Ok((0..=self.horizon())
            .map(|i| {
                Vec3::new(
                    axes[0].component(i, 0),
                    axes[1].component(i, 0),
                    axes[2].component(i, 0),
                )
            })
            .collect())
    }

    pub fn terms(&self, inputs: &[f64]) -> Result<LowTermGradients> {
        let m = self.horizon();
        let axes = self.rollouts(inputs)?;
        let thr = self.config.safe_distance;

        let mut sim_state = [
            StateSequence::zeros(1, m),
            StateSequence::zeros(1, m),
            StateSequence::zeros(1, m),
        ];
        let mut col_state = sim_state.clone();
        let mut similarity = 0.0;
        let mut collision = 0.0;
        for i in 1..=m {
            let p = Vec3::new(
                axes[0].component(i, 0),
                axes[1].component(i, 0),
                axes[2].component(i, 0),
            );
            let e = p - self.guide[i];
            similarity += e.norm_squared();
            let q = self.esdf.query_clamped(&p);
            let (fc, dfc) = collision_penalty(q.value, thr);
            if !fc.is_finite() || !similarity.is_finite() {
                return Err(PlannerError::NonFiniteCost {
                    term: if fc.is_finite() { "similarity" } else { "collision" },
                    step: i,
                });
            }
            collision += fc;
            for axis in 0..3 {
                *sim_state[axis].component_mut(i, 0) = 2.0 * e[axis];
                *col_state[axis].component_mut(i, 0) = dfc * q.gradient[axis];
            }
        }

        let mut smoothness = 0.0;
        let mut smooth_grad = vec![0.0; 3 * m];
        for axis in 0..3 {
            let u = &inputs[axis * m..(axis + 1) * m];
            for i in 0..m.saturating_sub(1) {
                let d = u[i + 1] - u[i];
                smoothness += d * d;
                smooth_grad[axis * m + i + 1] += 2.0 * d;
                smooth_grad[axis * m + i] -= 2.0 * d;
            }
        }

        let mut sim_grad = Vec::with_capacity(3 * m);
        let mut col_grad = Vec::with_capacity(3 * m);
        for axis in 0..3 {
            sim_grad.extend(self.model.input_gradient(&sim_state[axis]));
            col_grad.extend(self.model.input_gradient(&col_state[axis]));
        }
        let [k1, k2, k3] = self.config.kappa;
        Ok(LowTermGradients {
            breakdown: LowCostBreakdown {
                similarity,
                collision,
                smoothness,
                total: k1 * similarity + k2 * collision + k3 * smoothness,
            },
            similarity: sim_grad,
            collision: col_grad,
            smoothness: smooth_grad,
        })
    }

    /// Weighted cost, writing its gradient into `grad`.
    pub fn cost_and_gradient(&self, inputs: &[f64], grad: &mut [f64]) -> Result<LowCostBreakdown> {
        let t = self.terms(inputs)?;
        let [k1, k2, k3] = self.config.kappa;
        for (j, g) in grad.iter_mut().enumerate() {
            *g = k1 * t.similarity[j] + k2 * t.collision[j] + k3 * t.smoothness[j];
        }
        Ok(t.breakdown)
    }
}

/// Weighted objective and gradient at `inputs` (axis-major, `3·M` entries).
pub fn low_cost_and_gradient(
    inputs: &[f64],
    guide: &[Vec3],
    esdf: &EsdfField,
    start: Vec3,
    config: &LowMpcConfig,
) -> Result<(f64, Vec<f64>)> {
    let problem = LowMpcProblem::new(guide, esdf, start, config)?;
    let mut grad = vec![0.0; inputs.len()];
    let b = problem.cost_and_gradient(inputs, &mut grad)?;
    Ok((b.total, grad))
}

#[derive(Debug, Clone)]
pub struct LowMpcSolution {
    pub reference: ReferenceTrajectory,
    pub initial: LowCostBreakdown,
    pub breakdown: LowCostBreakdown,
    pub report: Option<OptimizeReport>,
    /// Optimiser stopped without meeting a convergence test.
    pub degraded: bool,
}

/// Optimises the guiding window `g_0 … g_M` into a reference starting at `start`.
pub fn solve_low_mpc(
    guide: &[Vec3],
    esdf: &EsdfField,
    start: Vec3,
    config: &LowMpcConfig,
    options: &OptimizeOptions,
) -> Result<LowMpcSolution> {
    if guide.len() <= 2 {
        let mut knots = vec![start];
        knots.extend(guide.iter().skip(1));
        let problem_free = LowCostBreakdown::default();
        return Ok(LowMpcSolution {
            reference: ReferenceTrajectory::new(knots, config.dt),
            initial: problem_free,
            breakdown: problem_free,
            report: None,
            degraded: false,
        });
    }
    let problem = LowMpcProblem::new(guide, esdf, start, config)?;
    let x0 = problem.guide_inputs();
    let mut scratch = vec![0.0; x0.len()];
    let initial = problem.cost_and_gradient(&x0, &mut scratch)?;
    let minimum = optimizer::minimize(
        |u, g| match problem.cost_and_gradient(u, g) {
            Ok(b) => b.total,
            Err(_) => f64::INFINITY,
        },
        x0,
        options,
    )?;
    let breakdown = problem.cost_and_gradient(&minimum.x, &mut scratch)?;
    Ok(LowMpcSolution {
        reference: ReferenceTrajectory::new(problem.positions(&minimum.x)?, config.dt),
        initial,
        breakdown,
        degraded: !minimum.report.converged(),
        report: Some(minimum.report),
    })
}
