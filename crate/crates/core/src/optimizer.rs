//! Limited-memory BFGS with a strong-Wolfe line search, and a central
//! difference gradient checker.
//!
//! Objectives are closures `f(x, grad) -> cost` that write the gradient into
//! `grad`. A non-finite cost anywhere except the starting point is treated as
//! `+∞`, so the line search simply backs off.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{PlannerError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeOptions {
    pub max_iterations: usize,
    /// Stop once `‖∇f‖∞` falls below this.
    pub gradient_tolerance: f64,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub relative_cost_tolerance: f64,
    /// Wall-clock cap in seconds.
    pub max_wall_time: f64,
    /// Number of curvature pairs kept.
    pub history: usize,
    /// Armijo constant `c1`.
    pub sufficient_decrease: f64,
    /// Curvature constant `c2`.
    pub curvature: f64,
    pub max_line_search_evaluations: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-6,
            relative_cost_tolerance: 1e-10,
            max_wall_time: 5.0,
            history: 8,
            sufficient_decrease: 1e-4,
            curvature: 0.9,
            max_line_search_evaluations: 30,
        }
    }
}

impl OptimizeOptions {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.max_iterations == 0 {
            return Err("optimizer max_iterations must be at least 1".into());
        }
        let positive = [
            self.gradient_tolerance,
            self.relative_cost_tolerance,
            self.max_wall_time,
        ];
        if positive.iter().any(|&t| !(t > 0.0)) {
            return Err("optimizer tolerances and wall time must be positive".into());
        }
        if self.history == 0 || self.max_line_search_evaluations == 0 {
            return Err("optimizer history and line-search budget must be at least 1".into());
        }
        if !(0.0 < self.sufficient_decrease
            && self.sufficient_decrease < self.curvature
            && self.curvature < 1.0)
        {
            return Err("line search constants need 0 < c1 < c2 < 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    CostStall,
    MaxIterations,
    WallTime,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub initial_cost: f64,
    pub cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub gradient_norm: f64,
    pub termination: Termination,
}

impl OptimizeReport {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::GradientTolerance | Termination::CostStall
        )
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub report: OptimizeReport,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Counted<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x, g);
        if v.is_finite() && g.iter().all(|x| x.is_finite()) {
            v
        } else {
            f64::INFINITY
        }
    }
}

struct Point {
    alpha: f64,
    x: Vec<f64>,
    g: Vec<f64>,
    f: f64,
    slope: f64,
}

struct LineSearch<'a> {
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    budget: usize,
}

impl LineSearch<'_> {
    fn probe<F: FnMut(&[f64], &mut [f64]) -> f64>(
        &mut self,
        obj: &mut Counted<F>,
        alpha: f64,
    ) -> Option<Point> {
        if self.budget == 0 {
            return None;
        }
        self.budget -= 1;
        let x: Vec<f64> = self.x.iter().zip(self.d).map(|(x, d)| x + alpha * d).collect();
        let mut g = vec![0.0; x.len()];
        let f = obj.eval(&x, &mut g);
        let slope = if f.is_finite() { dot(&g, self.d) } else { f64::NAN };
        Some(Point {
            alpha,
            x,
            g,
            f,
            slope,
        })
    }

    fn armijo(&self, p: &Point) -> bool {
        p.f.is_finite() && p.f <= self.f0 + self.c1 * p.alpha * self.slope0
    }

    fn curvature_ok(&self, p: &Point) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    /// Strong-Wolfe search; falls back to the best Armijo point when the
    /// evaluation budget runs out.
    fn run<F: FnMut(&[f64], &mut [f64]) -> f64>(
        &mut self,
        obj: &mut Counted<F>,
        initial: f64,
    ) -> Option<Point> {
        let mut prev: Option<Point> = None;
        let mut alpha = initial;
        loop {
            let Some(p) = self.probe(obj, alpha) else {
                return prev;
            };
            let worse_than_prev = prev.as_ref().is_some_and(|q| p.f >= q.f);
            if !self.armijo(&p) || worse_than_prev {
                return self.zoom(obj, prev, p);
            }
            if self.curvature_ok(&p) {
                return Some(p);
            }
            if p.slope >= 0.0 {
                return self.zoom(obj, Some(p), prev.unwrap_or_else(|| self.origin()));
            }
            alpha = 2.0 * p.alpha;
            prev = Some(p);
        }
    }

    fn origin(&self) -> Point {
        Point {
            alpha: 0.0,
            x: self.x.to_vec(),
            g: Vec::new(),
            f: self.f0,
            slope: self.slope0,
        }
    }

    /// `lo` satisfies Armijo and has the lower cost; the minimizer lies between
    /// `lo` and `hi`. `lo == None` stands for the origin.
    fn zoom<F: FnMut(&[f64], &mut [f64]) -> f64>(
        &mut self,
        obj: &mut Counted<F>,
        lo: Option<Point>,
        mut hi: Point,
    ) -> Option<Point> {
        let mut lo = lo.unwrap_or_else(|| self.origin());
        loop {
            let (a, b) = (lo.alpha, hi.alpha);
            let width = (b - a).abs();
            if width < 1e-16 * a.abs().max(b.abs()).max(1e-300) {
                break;
            }
            let trial = cubic_minimizer(&lo, &hi)
                .filter(|t| {
                    let (min, max) = (a.min(b), a.max(b));
                    *t > min + 0.1 * width && *t < max - 0.1 * width
                })
                .unwrap_or(0.5 * (a + b));
            let Some(p) = self.probe(obj, trial) else {
                break;
            };
            if !self.armijo(&p) || p.f >= lo.f {
                hi = p;
            } else {
                if self.curvature_ok(&p) {
                    return Some(p);
                }
                if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = std::mem::replace(&mut lo, p);
                } else {
                    lo = p;
                }
            }
        }
        (lo.alpha > 0.0 && lo.f < self.f0).then_some(lo)
    }
}

fn cubic_minimizer(a: &Point, b: &Point) -> Option<f64> {
    if !(a.f.is_finite() && b.f.is_finite() && a.slope.is_finite() && b.slope.is_finite()) {
        return None;
    }
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Approximate inverse Hessian applied in place, used as the initial matrix of
/// the two-loop recursion.
pub type Preconditioner<'a> = &'a dyn Fn(&mut [f64]);

/// Two-loop recursion: returns `-H ∇f`.
fn search_direction(
    g: &[f64],
    history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    precondition: Option<Preconditioner<'_>>,
) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    match precondition {
        Some(p) => {
            p(&mut q);
            if let Some((s, y, _)) = history.back() {
                let mut py = y.clone();
                p(&mut py);
                let gamma = dot(s, y) / dot(y, &py);
                q.iter_mut().for_each(|v| *v *= gamma);
            }
        }
        None => {
            if let Some((s, y, _)) = history.back() {
                let gamma = dot(s, y) / dot(y, y);
                q.iter_mut().for_each(|v| *v *= gamma);
            }
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

pub fn minimize<F>(f: F, x0: Vec<f64>, options: &OptimizeOptions) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    minimize_observed(f, x0, options, |_, _, _| {})
}

/// Like [`minimize`], calling `observer(iteration, x, cost)` after every
/// accepted step.
pub fn minimize_observed<F, O>(f: F, x0: Vec<f64>, options: &OptimizeOptions, observer: O) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    O: FnMut(usize, &[f64], f64),
{
    minimize_preconditioned(f, x0, options, None, observer)
}

/// Like [`minimize_observed`] with `precondition` as the initial inverse
/// Hessian. A good preconditioner makes the unit step acceptable from the
/// first iteration.
pub fn minimize_preconditioned<F, O>(
    f: F,
    x0: Vec<f64>,
    options: &OptimizeOptions,
    precondition: Option<Preconditioner<'_>>,
    mut observer: O,
) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    O: FnMut(usize, &[f64], f64),
{
    let started = Instant::now();
    let mut obj = Counted { f, evaluations: 0 };
    let mut x = x0;
    let mut g = vec![0.0; x.len()];
    let mut fx = obj.eval(&x, &mut g);
    if !fx.is_finite() {
        return Err(PlannerError::NonFiniteStart);
    }
    let initial_cost = fx;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(options.history);

    let finish = |x: Vec<f64>, fx: f64, g: &[f64], iterations, evaluations, termination| Minimum {
        x,
        report: OptimizeReport {
            initial_cost,
            cost: fx,
            iterations,
            evaluations,
            gradient_norm: inf_norm(g),
            termination,
        },
    };

    if inf_norm(&g) <= options.gradient_tolerance {
        return Ok(finish(
            x,
            fx,
            &g,
            0,
            obj.evaluations,
            Termination::GradientTolerance,
        ));
    }

    for iteration in 1..=options.max_iterations {
        let mut d = search_direction(&g, &history, precondition);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) && !history.is_empty() {
            history.clear();
            d = search_direction(&g, &history, precondition);
            slope = dot(&g, &d);
        }
        if !(slope < 0.0) {
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let initial_step = if history.is_empty() && precondition.is_none() {
            (1.0 / dot(&g, &g).sqrt()).min(1.0)
        } else {
            1.0
        };
        let mut search = LineSearch {
            x: &x,
            d: &d,
            f0: fx,
            slope0: slope,
            c1: options.sufficient_decrease,
            c2: options.curvature,
            budget: options.max_line_search_evaluations,
        };
        let accepted = search.run(&mut obj, initial_step);
        let Some(p) = accepted else {
            if !history.is_empty() {
                // Retry from steepest descent on the next pass.
                history.clear();
                continue;
            }
            return Ok(finish(
                x,
                fx,
                &g,
                iteration - 1,
                obj.evaluations,
                Termination::LineSearchFailed,
            ));
        };

        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == options.history {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = (fx - p.f) / fx.abs().max(p.f.abs()).max(1e-300);
        x = p.x;
        g = p.g;
        fx = p.f;
        observer(iteration, &x, fx);

        if inf_norm(&g) <= options.gradient_tolerance {
            return Ok(finish(
                x,
                fx,
                &g,
                iteration,
                obj.evaluations,
                Termination::GradientTolerance,
            ));
        }
        if decrease <= options.relative_cost_tolerance {
            return Ok(finish(
                x,
                fx,
                &g,
                iteration,
                obj.evaluations,
                Termination::CostStall,
            ));
        }
        if started.elapsed().as_secs_f64() > options.max_wall_time {
            return Ok(finish(
                x,
                fx,
                &g,
                iteration,
                obj.evaluations,
                Termination::WallTime,
            ));
        }
    }
    let iterations = options.max_iterations;
    Ok(finish(
        x,
        fx,
        &g,
        iterations,
        obj.evaluations,
        Termination::MaxIterations,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub index: usize,
    /// `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞)`, insensitive to rounding in entries that
    /// are tiny next to the rest of the gradient.
    pub normwise_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the analytic gradient at `x` with central differences of step
/// `step` per coordinate.
///
/// The per-coordinate error is `|a − n| / max(|a|, |n|, 1e-6·s, 1e-12)` where
/// `s` is the largest gradient entry, so coordinates that are numerically zero
/// relative to the rest of the gradient do not dominate through rounding.
pub fn check_gradient<F>(mut f: F, x: &[f64], step: f64) -> GradientCheck
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut analytic = vec![0.0; n];
    f(x, &mut analytic);
    let mut scratch = vec![0.0; n];
    let mut probe = x.to_vec();
    let numeric: Vec<f64> = (0..n)
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe, &mut scratch);
            probe[i] = x[i] - step;
            let down = f(&probe, &mut scratch);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect();
    let scale = inf_norm(&analytic).max(inf_norm(&numeric));
    let mut worst = (0.0, 0);
    let mut abs_worst = 0.0f64;
    for i in 0..n {
        abs_worst = abs_worst.max((analytic[i] - numeric[i]).abs());
        let denom = analytic[i]
            .abs()
            .max(numeric[i].abs())
            .max(1e-6 * scale)
            .max(1e-12);
        let err = (analytic[i] - numeric[i]).abs() / denom;
        if !(err <= worst.0) {
            worst = (err, i);
        }
    }
    GradientCheck {
        max_relative_error: worst.0,
        index: worst.1,
        normwise_error: if abs_worst == 0.0 {
            0.0
        } else {
            abs_worst / scale.max(1e-300)
        },
        analytic,
        numeric,
    }
}
