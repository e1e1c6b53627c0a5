use std::time::Instant;

use super::analysis::{approach_depart, zone_stats};
use super::log::{FlightLog, Layer, Metrics, ReplanEvent, SolveStats, TickRecord, Timing, Trigger};
use super::maps::generate_map;
use super::scenario::{Scenario, Sensing};
use crate::config::PlannerConfig;
use crate::easa;
use crate::error::{PlannerError, Result};
use crate::global_path::{astar, resample};
use crate::grid_esdf::{build_esdf, raycast_free, EsdfField, VoxelGrid};
use crate::high_mpcc::{shift_warm_start, solve_high_mpcc, FullState, MpccSolution, DIMS};
use crate::low_mpc::{solve_low_mpc, ReferenceTrajectory};
use crate::Vec3;

/// Radius around the gate center used for gate-zone speed statistics.
pub const GATE_ZONE_RADIUS: f64 = 1.0;

/// Occupied cells of the true map that the planner has not seen yet.
struct Sensor {
    radius: f64,
    hidden: Vec<usize>,
}

impl Sensor {
    /// Marks visible cells within range as known. Returns true if any were.
    fn reveal(&mut self, truth: &VoxelGrid, known: &mut VoxelGrid, from: &Vec3) -> bool {
        let geometry = *truth.geometry();
        let back = 0.75 * geometry.resolution;
        let before = self.hidden.len();
        self.hidden.retain(|&id| {
            let cell = geometry.cell_of(id);
            let c = geometry.cell_center(cell);
            let d = c - from;
            let dist = d.norm();
            if dist > self.radius {
                return true;
            }
            let visible =
                dist <= back || raycast_free(truth, from, &(c - d * (back / dist))).unwrap_or(false);
            if visible {
                known.set_occupied(cell, true);
            }
            !visible
        });
        self.hidden.len() != before
    }
}

struct Vehicle {
    p: Vec3,
    v: Vec3,
    a: Vec3,
    progress: [f64; 3],
}

impl Vehicle {
    fn full_state(&self) -> FullState {
        FullState {
            position: self.p,
            velocity: self.v,
            acceleration: self.a,
            progress: self.progress,
        }
    }

    /// Exact triple-integrator step under constant jerk.
    fn advance(&mut self, jerk: Vec3, progress_jerk: f64, tau: f64) {
        let (t2, t3) = (tau * tau / 2.0, tau * tau * tau / 6.0);
        self.p += self.v * tau + self.a * t2 + jerk * t3;
        self.v += self.a * tau + jerk * t2;
        self.a += jerk * tau;
        let [th, vt, at] = self.progress;
        self.progress = [
            th + vt * tau + at * t2 + progress_jerk * t3,
            vt + at * tau + progress_jerk * t2,
            at + progress_jerk * tau,
        ];
    }
}

struct ActiveReference {
    trajectory: ReferenceTrajectory,
    planned_at: f64,
    ends_at_goal: bool,
}

fn guide_window(
    known: &VoxelGrid,
    esdf: &EsdfField,
    from: &Vec3,
    goal: &Vec3,
    config: &PlannerConfig,
) -> Option<(Vec<Vec3>, bool)> {
    let mut clearance = config.sim.guide_clearance;
    let path = loop {
        match astar(known, esdf, from, goal, clearance) {
            Ok(p) => break p,
            Err(PlannerError::InvalidEndpoint { .. } | PlannerError::Unreachable) if clearance > 0.0 => {
                clearance = if clearance < 0.02 { 0.0 } else { clearance / 2.0 };
            }
            Err(e) => {
                log::debug!("guide search failed: {e}");
                return None;
            }
        }
    };
    let mut points = path.points(known);
    points[0] = *from;
    if points.len() == 1 {
        points.push(*goal);
    } else {
        *points.last_mut().unwrap() = *goal;
    }
    let guide = resample(&points, config.low_mpc.guide_spacing()).ok()?;
    let m = config.low_mpc.horizon;
    let ends_at_goal = guide.points.len() <= m + 1;
    let mut window = guide.points;
    window.truncate(m + 1);
    Some((window, ends_at_goal))
}

fn reference_blocked(reference: &ActiveReference, theta: f64, esdf: &EsdfField, clearance: f64) -> bool {
    let r = &reference.trajectory;
    r.sample_from(theta, r.knot_spacing() / 4.0)
        .iter()
        .any(|p| esdf.query_clamped(p).value < clearance)
}

/// Runs one closed-loop flight. `config` is the base planner configuration;
/// the scenario's limits are applied on top of it.
///
/// Errors are reserved for invalid input (bad map or endpoints); planner
/// trouble during the flight ends the episode with failure metrics.
pub fn run_episode(scenario: &Scenario, config: &PlannerConfig) -> Result<(FlightLog, Metrics)> {
    scenario.validate().map_err(PlannerError::Config)?;
    let cfg = scenario.planner_config(config);
    cfg.validate().map_err(PlannerError::Config)?;
    let sim = cfg.sim;

    let generated = generate_map(
        &scenario.map,
        &scenario.start,
        &scenario.goal,
        scenario.seed,
        sim.guide_clearance,
    )?;
    let truth = generated.grid;
    let true_esdf = build_esdf(&truth);
    for (which, p) in [("start", &scenario.start), ("goal", &scenario.goal)] {
        if !truth.geometry().contains(p) || truth.is_occupied_at(p) || true_esdf.query_clamped(p).value <= 0.0
        {
            return Err(PlannerError::InvalidEndpoint { which });
        }
    }

    let (mut known, mut sensor) = match scenario.sensing {
        Sensing::Full => (truth.clone(), None),
        Sensing::RangeLimited { radius } => {
            let empty =
                VoxelGrid::from_occupancy(*truth.geometry(), vec![false; truth.geometry().cell_count()])?;
            let hidden = (0..truth.geometry().cell_count())
                .filter(|&id| truth.is_occupied_linear(id))
                .collect();
            (empty, Some(Sensor { radius, hidden }))
        }
    };
    if let Some(s) = sensor.as_mut() {
        s.reveal(&truth, &mut known, &scenario.start);
    }
    let mut known_esdf = build_esdf(&known);

    let n = cfg.high_mpcc.horizon;
    let dt = cfg.high_mpcc.dt;
    let tick = sim.tick;
    let ticks_per_step = (dt / tick).round().max(1.0) as usize;
    let ticks_per_control = (sim.control_period / tick).round().max(1.0) as usize;
    let max_ticks = (sim.timeout / tick).ceil() as usize;
    let lookahead = scenario.v_max * n as f64 * dt;
    let c_thr = cfg.high_mpcc.safe_distance;

    let mut vehicle = Vehicle {
        p: scenario.start,
        v: Vec3::zeros(),
        a: Vec3::zeros(),
        progress: [0.0; 3],
    };
    let mut log = FlightLog::default();
    let mut reference: Option<ActiveReference> = None;
    let mut plan: Option<(MpccSolution, usize)> = None;
    let mut pending_collision = false;
    let mut failure: Option<String> = None;
    let mut reached_goal = false;
    let mut collided = false;
    let mut unconverged = 0;

    let record = |log: &mut FlightLog, k: usize, v: &Vehicle| {
        let q = true_esdf.query_clamped(&v.p);
        let beta = easa::beta(&v.v, &q.gradient, &cfg.easa);
        log.ticks.push(TickRecord {
            t: k as f64 * tick,
            position: v.p,
            velocity: v.v,
            acceleration: v.a,
            clearance: q.value,
            eta: easa::eta(beta, &cfg.easa),
        });
    };
    record(&mut log, 0, &vehicle);

    let mut k = 0;
    while k < max_ticks {
        let t = k as f64 * tick;
        let control_tick = k % ticks_per_control == 0;

        let trigger = match &reference {
            None => Some(Trigger::Initial),
            Some(_) if pending_collision => Some(Trigger::Collision),
            Some(r) if control_tick && t - r.planned_at >= sim.reference_period - 1e-9 => {
                Some(Trigger::Periodic)
            }
            Some(r)
                if control_tick
                    && !r.ends_at_goal
                    && r.trajectory.arc_length_from(vehicle.progress[0]) < lookahead =>
            {
                Some(Trigger::Lookahead)
            }
            _ => None,
        };
        let mut replan_control = control_tick || plan.is_none();
        if let Some(trigger) = trigger {
            pending_collision = false;
            let started = Instant::now();
            match guide_window(&known, &known_esdf, &vehicle.p, &scenario.goal, &cfg) {
                Some((guide, ends_at_goal)) => {
                    match solve_low_mpc(&guide, &known_esdf, vehicle.p, &cfg.low_mpc, &cfg.optimizer.low) {
                        Ok(sol) => {
                            let report = sol.report.as_ref();
                            log.events.push(ReplanEvent {
                                t,
                                layer: Layer::Reference,
                                trigger,
                                iterations: report.map_or(0, |r| r.iterations),
                                converged: !sol.degraded,
                                solve_ms: started.elapsed().as_secs_f64() * 1e3,
                            });
                            let mut trajectory = sol.reference;
                            let clips = |r: &ReferenceTrajectory| {
                                r.sample_from(0.0, r.knot_spacing() / 8.0)
                                    .iter()
                                    .any(|p| known_esdf.query_clamped(p).value < 0.0)
                            };
                            if clips(&trajectory) {
                                let fallback = ReferenceTrajectory::new(guide.clone(), cfg.low_mpc.dt);
                                if !clips(&fallback) {
                                    log::debug!(
                                        "t={t:.2} optimised reference clips an obstacle, using the guide"
                                    );
                                    trajectory = fallback;
                                }
                            }
                            let slope = trajectory.eval(0.0).velocity;
                            let s2 = slope.norm_squared();
                            let v_theta = if s2 > 1e-12 {
                                vehicle.v.dot(&slope).max(0.0) / s2
                            } else {
                                0.0
                            };
                            let bounds = cfg.high_mpcc.limits.progress_velocity;
                            vehicle.progress = [0.0, v_theta.clamp(bounds[0], bounds[1]), 0.0];
                            reference = Some(ActiveReference {
                                trajectory,
                                planned_at: t,
                                ends_at_goal,
                            });
                            replan_control = true;
                        }
                        Err(e) => log::debug!("reference optimisation failed at t={t}: {e}"),
                    }
                }
                None => log::debug!("no guiding path at t={t}"),
            }
            if reference.is_none() {
                failure = Some("no reference trajectory".into());
                break;
            }
        }

        if replan_control {
            let r = reference.as_ref().expect("reference exists before control");
            let warm = plan.as_ref().map(|(p, at)| {
                let steps = ((k - at) / ticks_per_step).min(n);
                shift_warm_start(&p.inputs, n, steps)
            });
            match solve_high_mpcc(
                &r.trajectory,
                &known_esdf,
                &cfg.easa,
                vehicle.full_state(),
                warm.as_deref(),
                &cfg.high_mpcc,
                &cfg.optimizer.high,
            ) {
                Ok(sol) => {
                    log.events.push(ReplanEvent {
                        t,
                        layer: Layer::Control,
                        trigger: Trigger::Control,
                        iterations: sol.report.iterations,
                        converged: sol.converged,
                        solve_ms: sol.solve_time_ms,
                    });
                    if !sol.converged {
                        unconverged += 1;
                    }
                    log::trace!(
                        "t={t:.2} state {:?} progress {:?} cost {:?} iterations {}",
                        vehicle.p,
                        vehicle.progress,
                        sol.breakdown,
                        sol.report.iterations
                    );
                    plan = Some((sol, k));
                }
                Err(e) => {
                    failure = Some(format!("control optimisation failed: {e}"));
                    break;
                }
            }
        }

        let (p, at) = plan.as_ref().expect("plan exists after control");
        let step = ((k - at) / ticks_per_step).min(n - 1);
        vehicle.advance(p.jerk(step), p.inputs[(DIMS - 1) * n + step], tick);
        k += 1;
        record(&mut log, k, &vehicle);

        if truth.is_occupied_at(&vehicle.p) || log.ticks.last().unwrap().clearance <= 0.0 {
            collided = true;
            break;
        }
        if (vehicle.p - scenario.goal).norm() <= sim.goal_tolerance {
            reached_goal = true;
            break;
        }
        if let Some(s) = sensor.as_mut() {
            if s.reveal(&truth, &mut known, &vehicle.p) {
                known_esdf = build_esdf(&known);
                if let Some(r) = &reference {
                    pending_collision = reference_blocked(
                        r,
                        vehicle.progress[0],
                        &known_esdf,
                        sim.reference_collision_clearance,
                    );
                }
            }
        }
    }
    if !reached_goal && !collided && failure.is_none() {
        failure = Some("timeout".into());
    }
    if collided {
        failure = Some("collision".into());
    }

    let ticks = &log.ticks;
    let path_length: f64 = ticks
        .windows(2)
        .map(|w| (w[1].position - w[0].position).norm())
        .sum();
    let flight_time = ticks.last().map_or(0.0, |r| r.t);
    let speeds: Vec<f64> = ticks.iter().map(|r| r.velocity.norm()).collect();
    let axis_max = |f: fn(&TickRecord) -> Vec3| ticks.iter().map(|r| f(r).amax()).fold(0.0, f64::max);
    let timing = sim.record_timing.then(|| Timing {
        low: SolveStats::from_times(&log.solve_times(Layer::Reference)),
        high: SolveStats::from_times(&log.solve_times(Layer::Control)),
    });
    let count = |layer| log.events.iter().filter(|e| e.layer == layer).count();
    let metrics = Metrics {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        easa_enabled: cfg.high_mpcc.lambda[2] > 0.0,
        success: reached_goal && !collided,
        reached_goal,
        collided,
        failure,
        flight_time,
        path_length,
        min_clearance: ticks.iter().map(|r| r.clearance).fold(f64::INFINITY, f64::min),
        max_speed: speeds.iter().copied().fold(0.0, f64::max),
        mean_speed: if flight_time > 0.0 {
            path_length / flight_time
        } else {
            0.0
        },
        max_axis_speed: axis_max(|r| r.velocity),
        max_axis_acceleration: axis_max(|r| r.acceleration),
        map_retries: generated.retries,
        reference_replans: count(Layer::Reference),
        control_replans: count(Layer::Control),
        unconverged_solves: unconverged,
        gate_zone: scenario
            .gate_center()
            .and_then(|c| zone_stats(ticks, &c, GATE_ZONE_RADIUS, c_thr)),
        approach_depart: approach_depart(ticks, c_thr),
        timing,
    };
    Ok((log, metrics))
}
