//! Contouring control over `{x, y, z, θ}` with jerk inputs.
//!
//! Objective: `λ1 f_s + λ2 f_p + λ3 f_e + λ4 f_c + λ5 f_d` where
//!
//! * `f_s = Σ ‖p_i − ρ(θ_i)‖²` tracks the reference at the current progress,
//! * `f_p = −δt Σ v_θ,i` rewards progress,
//! * `f_e = Σ η(β_i) F_c(c(p_i)) (‖v_i‖ − v_thr)²` slows the vehicle when it
//!   heads into obstacles,
//! * `f_c = Σ F_c(c(p_i))` keeps clearance,
//! * `f_d` is the cubic barrier on velocity, acceleration and jerk bounds.
//!
//! Inputs are stored dimension-major: `[j_x(0..N), j_y, j_z, j_θ]`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::easa::{self, EasaParams};
use crate::error::{PlannerError, Result};
use crate::grid_esdf::EsdfField;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::linear_system::{batch_map, IntegratorModel, StateSequence};
use crate::low_mpc::{collision_penalty, ReferenceTrajectory};
use crate::optimizer::{self, OptimizeOptions, OptimizeReport};
use crate::Vec3;

/// Number of optimised dimensions: three spatial axes and progress.
pub const DIMS: usize = 4;

/// `[d_min, d_max]` for each bounded quantity. Spatial bounds apply per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HighMpccLimits {
    pub velocity: [f64; 2],
    pub acceleration: [f64; 2],
    pub jerk: [f64; 2],
    pub progress_velocity: [f64; 2],
    pub progress_acceleration: [f64; 2],
    pub progress_jerk: [f64; 2],
}

impl Default for HighMpccLimits {
    fn default() -> Self {
        Self {
            velocity: [-3.0, 3.0],
            acceleration: [-5.0, 5.0],
            jerk: [-30.0, 30.0],
            progress_velocity: [0.0, 3.0],
            progress_acceleration: [-5.0, 5.0],
            progress_jerk: [-30.0, 30.0],
        }
    }
}

impl HighMpccLimits {
    fn all(&self) -> [(&'static str, [f64; 2]); 6] {
        [
            ("velocity", self.velocity),
            ("acceleration", self.acceleration),
            ("jerk", self.jerk),
            ("progress_velocity", self.progress_velocity),
            ("progress_acceleration", self.progress_acceleration),
            ("progress_jerk", self.progress_jerk),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HighMpccConfig {
    /// `[λ1 … λ5]`: tracking, progress, EASA, collision, feasibility.
    pub lambda: [f64; 5],
    /// `N`.
    pub horizon: usize,
    /// `δt` in seconds.
    pub dt: f64,
    /// `v_thr` in m/s.
    pub slow_speed: f64,
    /// `c_thr` in meters.
    pub safe_distance: f64,
    /// `ε` in `sqrt(‖v‖² + ε²)`.
    pub speed_smoothing: f64,
    pub limits: HighMpccLimits,
}

impl Default for HighMpccConfig {
    fn default() -> Self {
        Self {
            lambda: [200.0, 20.0, 3.0, 0.5, 800.0],
            horizon: 40,
            dt: 0.05,
            slow_speed: 0.1,
            safe_distance: 0.8,
            speed_smoothing: 1e-4,
            limits: HighMpccLimits::default(),
        }
    }
}

impl HighMpccConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.lambda.iter().any(|&l| !(l >= 0.0)) {
            return Err("high_mpcc.lambda weights must be non-negative".into());
        }
        if self.horizon == 0 || !(self.dt > 0.0) {
            return Err("high_mpcc.horizon and dt must be positive".into());
        }
        if !(self.slow_speed > 0.0) || !(self.safe_distance > 0.0) || !(self.speed_smoothing > 0.0) {
            return Err("high_mpcc.slow_speed, safe_distance and speed_smoothing must be positive".into());
        }
        for (name, [lo, hi]) in self.limits.all() {
            if !(lo <= hi) {
                return Err(format!(
                    "high_mpcc.limits.{name}: lower bound {lo} exceeds upper bound {hi}"
                ));
            }
        }
        Ok(())
    }
}

/// One-sided cubic barrier `f_d(d)` and its derivative.
#[inline]
pub fn feasibility_term(d: f64, [lo, hi]: [f64; 2]) -> (f64, f64) {
    if d < lo {
        let e = d - lo;
        (-e * e * e, -3.0 * e * e)
    } else if d > hi {
        let e = d - hi;
        (e * e * e, 3.0 * e * e)
    } else {
        (0.0, 0.0)
    }
}

/// `Σ f_d(d)` over a sequence of values.
pub fn feasibility_penalty(values: &[f64], bounds: [f64; 2]) -> f64 {
    values.iter().map(|&d| feasibility_term(d, bounds).0).sum()
}

/// Reference point `ρ(θ)` and slope `ρ′(θ)`.
pub fn progress_coupling(theta: f64, reference: &ReferenceTrajectory) -> (Vec3, Vec3) {
    let r = reference.eval(theta);
    (r.position, r.velocity)
}

/// Vehicle state together with the progress state `[θ, v_θ, a_θ]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub progress: [f64; 3],
}

impl FullState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            ..Default::default()
        }
    }

    /// `[p, v, a]` of dimension `dim` (3 is progress).
    pub fn dimension(&self, dim: usize) -> [f64; 3] {
        if dim == 3 {
            self.progress
        } else {
            [self.position[dim], self.velocity[dim], self.acceleration[dim]]
        }
    }

    pub fn is_finite(&self) -> bool {
        (0..DIMS).all(|d| self.dimension(d).iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HighCostBreakdown {
    pub tracking: f64,
    pub progress: f64,
    pub easa: f64,
    pub collision: f64,
    pub feasibility: f64,
    pub total: f64,
}

impl HighCostBreakdown {
    pub fn terms(&self) -> [f64; 5] {
        [
            self.tracking,
            self.progress,
            self.easa,
            self.collision,
            self.feasibility,
        ]
    }

    pub fn weighted_sum(&self, lambda: &[f64; 5]) -> f64 {
        self.terms().iter().zip(lambda).map(|(t, l)| t * l).sum()
    }
}

/// Names of the five objective terms in weight order.
pub const TERM_NAMES: [&str; 5] = ["tracking", "progress", "easa", "collision", "feasibility"];

/// Fixed data of one contouring solve.
#[derive(Debug, Clone)]
pub struct HighMpccProblem<'a> {
    reference: &'a ReferenceTrajectory,
    esdf: &'a EsdfField,
    easa: EasaParams,
    start: FullState,
    config: HighMpccConfig,
    model: IntegratorModel,
}

impl<'a> HighMpccProblem<'a> {
    pub fn new(
        reference: &'a ReferenceTrajectory,
        esdf: &'a EsdfField,
        easa: &EasaParams,
        start: FullState,
        config: &HighMpccConfig,
    ) -> Result<Self> {
        if !start.is_finite() {
            return Err(PlannerError::NonFiniteStart);
        }
        Ok(Self {
            reference,
            esdf,
            easa: *easa,
            start,
            config: *config,
            model: IntegratorModel::new(3, config.dt, config.horizon)?,
        })
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn variable_count(&self) -> usize {
        DIMS * self.config.horizon
    }

    pub fn rollout(&self, inputs: &[f64]) -> Result<[StateSequence; DIMS]> {
        let n = self.horizon();
        if inputs.len() != DIMS * n {
            return Err(PlannerError::LengthMismatch {
                expected: DIMS * n,
                got: inputs.len(),
            });
        }
        let mut out = Vec::with_capacity(DIMS);
        for d in 0..DIMS {
            out.push(
                self.model
                    .rollout(&self.start.dimension(d), &inputs[d * n..(d + 1) * n])?,
            );
        }
        Ok(out.try_into().expect("four dimensions"))
    }

    /// Unweighted term values with `total` and `grad` weighted by `weights`.
    pub fn evaluate(
        &self,
        inputs: &[f64],
        weights: &[f64; 5],
        grad: Option<&mut [f64]>,
    ) -> Result<HighCostBreakdown> {
        let n = self.horizon();
        let dt = self.config.dt;
        let thr = self.config.safe_distance;
        let eps2 = self.config.speed_smoothing * self.config.speed_smoothing;
        let lim = &self.config.limits;
        let [w_s, w_p, w_e, w_c, w_d] = *weights;
        let seq = self.rollout(inputs)?;
        let mut sg: [StateSequence; DIMS] = std::array::from_fn(|_| StateSequence::zeros(3, n));
        let mut out = HighCostBreakdown::default();

        for i in 1..=n {
            let p = Vec3::new(
                seq[0].component(i, 0),
                seq[1].component(i, 0),
                seq[2].component(i, 0),
            );
            let v = Vec3::new(
                seq[0].component(i, 1),
                seq[1].component(i, 1),
                seq[2].component(i, 1),
            );
            let theta = seq[3].state(i);

            let (rp, slope) = progress_coupling(theta[0], self.reference);
            let e = p - rp;
            let tracking = e.norm_squared();
            let mut gp = e * (2.0 * w_s);
            let mut gv = Vec3::zeros();
            *sg[3].component_mut(i, 0) += -2.0 * w_s * e.dot(&slope);

            let progress = -dt * theta[1];
            *sg[3].component_mut(i, 1) += -dt * w_p;

            let q = self.esdf.query_clamped(&p);
            let (fc, dfc) = collision_penalty(q.value, thr);
            gp += q.gradient * (w_c * dfc);

            let mut fe = 0.0;
            if fc > 0.0 {
                let bp = easa::beta_partials(&v, &q.gradient, &self.easa);
                let eta = easa::eta(bp.beta, &self.easa);
                let speed = (v.norm_squared() + eps2).sqrt();
                let s = speed - self.config.slow_speed;
                fe = eta * fc * s * s;
                let t1 = easa::eta_derivative_wrt_beta(bp.beta, &self.easa) * fc * s * s;
                gv += (bp.wrt_velocity * t1 + v * (eta * fc * 2.0 * s / speed)) * w_e;
                gp += (q.hessian * bp.wrt_gradient * t1 + q.gradient * (eta * s * s * dfc)) * w_e;
            }

            let mut fd = 0.0;
            for axis in 0..3 {
                for (level, bounds) in [(1, lim.velocity), (2, lim.acceleration)] {
                    let (val, der) = feasibility_term(seq[axis].component(i, level), bounds);
                    fd += val;
                    *sg[axis].component_mut(i, level) += w_d * der;
                }
            }
            for (level, bounds) in [(1, lim.progress_velocity), (2, lim.progress_acceleration)] {
                let (val, der) = feasibility_term(theta[level], bounds);
                fd += val;
                *sg[3].component_mut(i, level) += w_d * der;
            }
            for d in 0..DIMS {
                let bounds = if d == 3 { lim.progress_jerk } else { lim.jerk };
                fd += feasibility_term(inputs[d * n + i - 1], bounds).0;
            }

            for (term, value) in [
                ("tracking", tracking),
                ("easa", fe),
                ("collision", fc),
                ("feasibility", fd),
            ] {
                if !value.is_finite() {
                    return Err(PlannerError::NonFiniteCost { term, step: i });
                }
            }
            if !progress.is_finite() {
                return Err(PlannerError::NonFiniteCost {
                    term: "progress",
                    step: i,
                });
            }
            out.tracking += tracking;
            out.progress += progress;
            out.easa += fe;
            out.collision += fc;
            out.feasibility += fd;
            for axis in 0..3 {
                *sg[axis].component_mut(i, 0) += gp[axis];
                *sg[axis].component_mut(i, 1) += gv[axis];
            }
        }
        out.total = out.weighted_sum(weights);

        if let Some(grad) = grad {
            for d in 0..DIMS {
                let g = self.model.input_gradient(&sg[d]);
                let bounds = if d == 3 { lim.progress_jerk } else { lim.jerk };
                for (k, gk) in g.into_iter().enumerate() {
                    grad[d * n + k] = gk + w_d * feasibility_term(inputs[d * n + k], bounds).1;
                }
            }
        }
        Ok(out)
    }

    /// Weighted objective with gradient.
    pub fn cost_and_gradient(&self, inputs: &[f64], grad: &mut [f64]) -> Result<HighCostBreakdown> {
        self.evaluate(inputs, &self.config.lambda, Some(grad))
    }

    /// Zero spatial jerk; progress jerk ramps `v_θ` to half its upper bound
    /// over the first half of the horizon.
    pub fn cold_start(&self) -> Vec<f64> {
        let n = self.horizon();
        let mut u = vec![0.0; DIMS * n];
        let ramp = (n / 4).max(1);
        let target = 0.5 * self.config.limits.progress_velocity[1] - self.start.progress[1];
        let span = ramp as f64 * self.config.dt;
        let jerk = target / (span * span);
        for k in 0..ramp.min(n) {
            u[3 * n + k] = jerk;
        }
        for k in ramp..(2 * ramp).min(n) {
            u[3 * n + k] = -jerk;
        }
        u
    }
}

/// Inverse of the Gauss-Newton tracking Hessian over all four dimensions,
/// linearised along the initial progress trajectory, plus a velocity term
/// and a ridge for the directions that tracking does not see.
struct TrackingPreconditioner {
    factor: Cholesky<f64, Dyn>,
}

const VELOCITY_WEIGHT: f64 = 1e-3;
const RIDGE: f64 = 1e-3;

impl TrackingPreconditioner {
    fn new(problem: &HighMpccProblem<'_>, x0: &[f64]) -> Option<Self> {
        let n = problem.horizon();
        let maps = batch_map(&problem.model);
        let seq = problem.rollout(x0).ok()?;
        let w = 2.0 * problem.config.lambda[0].max(1e-9);
        let mut h = DMatrix::zeros(DIMS * n, DIMS * n);
        let mut vel_gram = DMatrix::<f64>::zeros(n, n);
        for i in 1..=n {
            let r = DVector::from_vec(maps.state_jacobian_row(i, 0).ok()?);
            let rv = DVector::from_vec(maps.state_jacobian_row(i, 1).ok()?);
            let outer = &r * r.transpose() * w;
            vel_gram += &rv * rv.transpose();
            let slope = problem.reference.eval(seq[3].component(i, 0)).velocity;
            let mut coef = [[0.0; DIMS]; DIMS];
            for a in 0..3 {
                coef[a][a] = 1.0;
                coef[a][3] = -slope[a];
                coef[3][a] = -slope[a];
            }
            coef[3][3] = slope.norm_squared();
            for a in 0..DIMS {
                for b in 0..DIMS {
                    if coef[a][b] != 0.0 {
                        let mut blk = h.view_mut((a * n, b * n), (n, n));
                        blk += &outer * coef[a][b];
                    }
                }
            }
        }
        let scale = h.diagonal().max();
        let cv = VELOCITY_WEIGHT * scale / vel_gram.diagonal().max();
        for a in 0..DIMS {
            let mut blk = h.view_mut((a * n, a * n), (n, n));
            blk += &vel_gram * cv;
        }
        for k in 0..DIMS * n {
            h[(k, k)] += RIDGE * scale;
        }
        Some(Self {
            factor: h.cholesky()?,
        })
    }

    fn apply(&self, q: &mut [f64]) {
        let x = self.factor.solve(&DVector::from_column_slice(q));
        q.copy_from_slice(x.as_slice());
    }
}

/// Shifts each dimension's inputs left by `steps` and pads with zeros.
pub fn shift_warm_start(inputs: &[f64], horizon: usize, steps: usize) -> Vec<f64> {
    let mut out = vec![0.0; inputs.len()];
    for d in 0..inputs.len() / horizon {
        let src = &inputs[d * horizon..(d + 1) * horizon];
        for k in steps..horizon {
            out[d * horizon + k - steps] = src[k];
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct MpccSolution {
    pub inputs: Vec<f64>,
    pub states: [StateSequence; DIMS],
    pub initial: HighCostBreakdown,
    pub breakdown: HighCostBreakdown,
    pub report: OptimizeReport,
    pub converged: bool,
    /// The start position had non-positive clearance.
    pub infeasible_start: bool,
    pub solve_time_ms: f64,
    /// Per-iteration breakdown, filled only by [`solve_high_mpcc_traced`].
    pub trace: Vec<HighCostBreakdown>,
}

impl MpccSolution {
    pub fn horizon(&self) -> usize {
        self.inputs.len() / DIMS
    }

    pub fn position(&self, i: usize) -> Vec3 {
        Vec3::from_fn(|a, _| self.states[a].component(i, 0))
    }

    pub fn velocity(&self, i: usize) -> Vec3 {
        Vec3::from_fn(|a, _| self.states[a].component(i, 1))
    }

    pub fn acceleration(&self, i: usize) -> Vec3 {
        Vec3::from_fn(|a, _| self.states[a].component(i, 2))
    }

    /// Spatial jerk applied over step `i`.
    pub fn jerk(&self, i: usize) -> Vec3 {
        let n = self.horizon();
        Vec3::from_fn(|a, _| self.inputs[a * n + i])
    }

    pub fn progress(&self, i: usize) -> [f64; 3] {
        let s = self.states[3].state(i);
        [s[0], s[1], s[2]]
    }

    /// Structured text listing the final breakdown, trace and planned states.
    pub fn dump(&self) -> String {
        let states: Vec<_> = (0..=self.horizon())
            .map(|i| {
                serde_json::json!({
                    "step": i,
                    "position": self.position(i).as_slice(),
                    "velocity": self.velocity(i).as_slice(),
                    "acceleration": self.acceleration(i).as_slice(),
                    "progress": self.progress(i),
                })
            })
            .collect();
        let doc = serde_json::json!({
            "initial": self.initial,
            "final": self.breakdown,
            "report": self.report,
            "infeasible_start": self.infeasible_start,
            "trace": self.trace,
            "states": states,
        });
        serde_json::to_string_pretty(&doc).expect("solution serialises")
    }
}

fn solve(
    problem: &HighMpccProblem<'_>,
    warm_start: Option<&[f64]>,
    options: &OptimizeOptions,
    trace: bool,
) -> Result<MpccSolution> {
    let started = Instant::now();
    let x0 = match warm_start {
        Some(w) if w.len() == problem.variable_count() => w.to_vec(),
        Some(w) => {
            return Err(PlannerError::LengthMismatch {
                expected: problem.variable_count(),
                got: w.len(),
            })
        }
        None => problem.cold_start(),
    };
    let lambda = problem.config.lambda;
    let initial = problem.evaluate(&x0, &lambda, None)?;
    let mut history = Vec::new();
    let preconditioner = TrackingPreconditioner::new(problem, &x0);
    let apply = |q: &mut [f64]| {
        if let Some(p) = &preconditioner {
            p.apply(q)
        }
    };
    let minimum = optimizer::minimize_preconditioned(
        |u, g| match problem.cost_and_gradient(u, g) {
            Ok(b) => b.total,
            Err(_) => f64::INFINITY,
        },
        x0,
        options,
        Some(&apply),
        |_, x, _| {
            if trace {
                if let Ok(b) = problem.evaluate(x, &lambda, None) {
                    history.push(b);
                }
            }
        },
    )?;
    let breakdown = problem.evaluate(&minimum.x, &lambda, None)?;
    let states = problem.rollout(&minimum.x)?;
    let infeasible_start = problem.esdf.query_clamped(&problem.start.position).value <= 0.0;
    Ok(MpccSolution {
        converged: minimum.report.converged(),
        inputs: minimum.x,
        states,
        initial,
        breakdown,
        report: minimum.report,
        infeasible_start,
        solve_time_ms: started.elapsed().as_secs_f64() * 1e3,
        trace: history,
    })
}

/// Minimises the contouring objective from `warm_start`, or from
/// [`HighMpccProblem::cold_start`] when none is given.
pub fn solve_high_mpcc(
    reference: &ReferenceTrajectory,
    esdf: &EsdfField,
    easa: &EasaParams,
    start: FullState,
    warm_start: Option<&[f64]>,
    config: &HighMpccConfig,
    options: &OptimizeOptions,
) -> Result<MpccSolution> {
    let problem = HighMpccProblem::new(reference, esdf, easa, start, config)?;
    solve(&problem, warm_start, options, false)
}

/// [`solve_high_mpcc`] that also records the breakdown after every iteration.
pub fn solve_high_mpcc_traced(
    reference: &ReferenceTrajectory,
    esdf: &EsdfField,
    easa: &EasaParams,
    start: FullState,
    warm_start: Option<&[f64]>,
    config: &HighMpccConfig,
    options: &OptimizeOptions,
) -> Result<MpccSolution> {
    let problem = HighMpccProblem::new(reference, esdf, easa, start, config)?;
    solve(&problem, warm_start, options, true)
}
