//! Finite-difference verification of every cost term of both optimisation
//! layers over random states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::PlannerConfig;
use crate::grid_esdf::{build_esdf, EsdfField, VoxelGrid};
use crate::high_mpcc::{FullState, HighMpccProblem, DIMS, TERM_NAMES};
use crate::low_mpc::{LowMpcProblem, ReferenceTrajectory};
use crate::optimizer::check_gradient;
use crate::Vec3;

/// Tolerance for states whose horizon passes within the safe distance.
pub const NEAR_TOLERANCE: f64 = 1e-3;
/// Tolerance in obstacle-free space.
pub const FREE_TOLERANCE: f64 = 1e-4;
/// Central-difference step on the inputs.
pub const STEP: f64 = 1e-5;
/// Distance kept from non-smooth points, well above the largest position
/// change a step of [`STEP`] on one input can cause.
const SEAM_MARGIN: f64 = 1e-4;

pub const LOW_TERM_NAMES: [&str; 3] = ["similarity", "collision", "smoothness"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientSuiteOptions {
    /// Random states per region (near obstacles and free space).
    pub trials: usize,
    pub seed: u64,
    /// Negates the largest analytic gradient entry of every term, to prove
    /// that the suite detects a broken gradient.
    pub inject_sign_flip: bool,
}

impl Default for GradientSuiteOptions {
    fn default() -> Self {
        Self {
            trials: 50,
            seed: 0,
            inject_sign_flip: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermReport {
    pub layer: &'static str,
    pub term: &'static str,
    /// Worst relative error over near-obstacle states.
    pub worst_near: f64,
    /// Worst relative error over free-space states.
    pub worst_free: f64,
    /// Near-obstacle trials where the term was active.
    pub active_near: usize,
}

impl TermReport {
    pub fn passed(&self) -> bool {
        self.worst_near < NEAR_TOLERANCE && self.worst_free < FREE_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientReport {
    pub trials: usize,
    pub terms: Vec<TermReport>,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        self.terms.iter().all(TermReport::passed)
    }
}

fn pillar_field() -> EsdfField {
    let mut grid = VoxelGrid::new(Vec3::new(-1.0, -3.0, 0.95), 0.1, [120, 60, 1]).expect("valid grid");
    let pillars = [
        (2.0, 0.5, 0.25),
        (4.0, -0.6, 0.2),
        (6.5, 0.2, 0.3),
        (8.5, -0.3, 0.15),
    ];
    grid.fill_where(|p| {
        pillars
            .iter()
            .any(|&(x, y, r)| (p.x - x).powi(2) + (p.y - y).powi(2) < r * r)
    });
    build_esdf(&grid)
}

fn free_field() -> EsdfField {
    build_esdf(&VoxelGrid::new(Vec3::new(-1.0, -3.0, 0.95), 0.1, [120, 60, 1]).expect("valid grid"))
}

/// A wavy guide along +x starting at `x0`.
fn random_guide(rng: &mut ChaCha8Rng, x0: f64, y0: f64, m: usize, spacing: f64) -> Vec<Vec3> {
    let phase: f64 = rng.random_range(0.0..6.3);
    let amp: f64 = rng.random_range(0.0..0.3);
    (0..=m)
        .map(|i| {
            let x = x0 + spacing * i as f64;
            Vec3::new(x, y0 + amp * (phase + 0.7 * i as f64).sin(), 1.0)
        })
        .collect()
}

fn worst<F>(mut f: F, x: &[f64], flip: bool) -> f64
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let chk = check_gradient(
        |u, g| {
            let v = f(u, g);
            if flip {
                if let Some(k) = (0..g.len()).max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs())) {
                    g[k] = -g[k];
                }
            }
            v
        },
        x,
        STEP,
    );
    chk.normwise_error
}

fn low_terms(config: &PlannerConfig, options: &GradientSuiteOptions, report: &mut [TermReport]) {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let cfg = &config.low_mpc;
    let m = cfg.horizon;
    let spacing = cfg.guide_spacing();
    let near = pillar_field();
    let free = free_field();
    for region in 0..2 {
        let esdf = if region == 0 { &near } else { &free };
        for _ in 0..options.trials {
            let y0 = rng.random_range(-0.8..0.8);
            let guide = random_guide(&mut rng, 0.0, y0, m, spacing);
            let problem = LowMpcProblem::new(&guide, esdf, guide[0], cfg).expect("valid guide");
            let mut x = problem.guide_inputs();
            for v in x.iter_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
            let t = problem.terms(&x).expect("finite terms");
            for (k, r) in report.iter_mut().enumerate() {
                let e = worst(
                    |u, g| {
                        let t = problem.terms(u).expect("finite terms");
                        let (v, grad) = match k {
                            0 => (t.breakdown.similarity, t.similarity),
                            1 => (t.breakdown.collision, t.collision),
                            _ => (t.breakdown.smoothness, t.smoothness),
                        };
                        g.copy_from_slice(&grad);
                        v
                    },
                    &x,
                    options.inject_sign_flip,
                );
                if region == 0 {
                    r.worst_near = r.worst_near.max(e);
                    if k != 1 || t.breakdown.collision > 0.0 {
                        r.active_near += 1;
                    }
                } else {
                    r.worst_free = r.worst_free.max(e);
                }
            }
        }
    }
}

/// Keeps random states a perturbation away from points where the objective
/// is not twice differentiable: interpolation node planes of the distance
/// field (the risk term uses its Hessian) and the ends of the reference.
fn near_seam(
    problem: &HighMpccProblem,
    esdf: &EsdfField,
    reference: &ReferenceTrajectory,
    x: &[f64],
) -> bool {
    let seq = problem.rollout(x).expect("valid inputs");
    let end = reference.duration();
    (1..=problem.horizon()).any(|i| {
        let p = Vec3::new(
            seq[0].component(i, 0),
            seq[1].component(i, 0),
            seq[2].component(i, 0),
        );
        let theta = seq[3].component(i, 0);
        esdf.seam_distance(&p) < SEAM_MARGIN || theta.abs() < SEAM_MARGIN || (theta - end).abs() < SEAM_MARGIN
    })
}

fn high_terms(config: &PlannerConfig, options: &GradientSuiteOptions, report: &mut [TermReport]) {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(1));
    let cfg = &config.high_mpcc;
    let near = pillar_field();
    let free = free_field();
    let limits = cfg.limits;
    for region in 0..2 {
        let esdf = if region == 0 { &near } else { &free };
        for _ in 0..options.trials {
            let (reference, start, x) = loop {
                let y0 = rng.random_range(-0.8..0.8);
                let knots = random_guide(
                    &mut rng,
                    0.0,
                    y0,
                    config.low_mpc.horizon,
                    config.low_mpc.guide_spacing(),
                );
                let reference = ReferenceTrajectory::new(knots, config.low_mpc.dt);
                let theta0 = rng.random_range(0.0..reference.duration() / 2.0);
                let mut start = FullState::at_rest(reference.eval(theta0).position);
                start.position += Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), 0.0);
                // Speeds slightly beyond the limits so the barriers act.
                let vmax = limits.velocity[1] * 1.2;
                start.velocity = Vec3::new(
                    rng.random_range(-vmax..vmax),
                    rng.random_range(-vmax..vmax),
                    rng.random_range(-0.3..0.3),
                );
                start.acceleration = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 0.0);
                start.progress = [
                    theta0,
                    rng.random_range(0.0..limits.progress_velocity[1] * 1.1),
                    rng.random_range(-2.0..2.0),
                ];
                let x: Vec<f64> = (0..DIMS * cfg.horizon)
                    .map(|_| rng.random_range(-3.0..3.0))
                    .collect();
                let problem =
                    HighMpccProblem::new(&reference, esdf, &config.easa, start, cfg).expect("finite start");
                if !near_seam(&problem, esdf, &reference, &x) {
                    break (reference, start, x);
                }
            };
            let problem =
                HighMpccProblem::new(&reference, esdf, &config.easa, start, cfg).expect("finite start");
            let active = problem.evaluate(&x, &[1.0; 5], None).expect("finite terms");
            for (k, r) in report.iter_mut().enumerate() {
                let mut w = [0.0; 5];
                w[k] = 1.0;
                let e = worst(
                    |u, g| problem.evaluate(u, &w, Some(g)).expect("finite terms").total,
                    &x,
                    options.inject_sign_flip,
                );
                if region == 0 {
                    r.worst_near = r.worst_near.max(e);
                    if active.terms()[k] != 0.0 {
                        r.active_near += 1;
                    }
                } else {
                    r.worst_free = r.worst_free.max(e);
                }
            }
        }
    }
}

/// Checks every analytic cost gradient of both layers against central
/// differences over `options.trials` random states near obstacles and as
/// many in obstacle-free space.
pub fn gradient_suite(config: &PlannerConfig, options: &GradientSuiteOptions) -> GradientReport {
    let blank = |layer, term| TermReport {
        layer,
        term,
        worst_near: 0.0,
        worst_free: 0.0,
        active_near: 0,
    };
    let mut low: Vec<TermReport> = LOW_TERM_NAMES.iter().map(|t| blank("low", *t)).collect();
    let mut high: Vec<TermReport> = TERM_NAMES.iter().map(|t| blank("high", *t)).collect();
    low_terms(config, options, &mut low);
    high_terms(config, options, &mut high);
    low.extend(high);
    GradientReport {
        trials: options.trials,
        terms: low,
    }
}
