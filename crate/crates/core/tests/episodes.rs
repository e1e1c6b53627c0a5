use adaptive_mpcc::parallel::Execution;
use adaptive_mpcc::sim::{run_episode, run_seeds, FlightLog, Metrics, Scenario, Sensing};
use adaptive_mpcc::{PlannerConfig, PlannerError};

fn fly(name: &str) -> (FlightLog, Metrics) {
    run_episode(&Scenario::builtin(name).unwrap(), &PlannerConfig::default()).unwrap()
}

fn check_log(log: &FlightLog, s: &Scenario, tick: f64) {
    let vmax = s.v_max + 0.1;
    for w in log.ticks.windows(2) {
        assert!(w[1].t > w[0].t);
        let step = (w[1].position - w[0].position).norm();
        assert!(
            step <= vmax * 3f64.sqrt() * (w[1].t - w[0].t) + 1e-9,
            "jump {step} at t={}",
            w[1].t
        );
    }
    assert!((log.ticks[1].t - log.ticks[0].t - tick).abs() < 1e-9);
    for r in &log.ticks {
        assert!(r.velocity.amax() <= vmax, "v {:?} at t={}", r.velocity, r.t);
        assert!(
            r.acceleration.amax() <= s.a_max + 0.5,
            "a {:?} at t={}",
            r.acceleration,
            r.t
        );
        assert!(r.eta > 0.0 && r.eta < 2.0);
    }
}

#[test]
fn empty_map_reaches_speed_limit() {
    let s = Scenario::builtin("empty").unwrap();
    let (log, m) = fly("empty");
    assert!(m.success, "{m:?}");
    let distance = (s.goal - s.start).norm() - PlannerConfig::default().sim.goal_tolerance;
    assert!((m.max_speed - s.v_max).abs() <= 0.1 || m.max_axis_speed >= s.v_max - 0.1);
    assert!(m.flight_time >= distance / (s.v_max + 0.1));
    assert!(
        m.flight_time <= distance / s.v_max + 2.0 * s.v_max / s.a_max + 1.0,
        "{}",
        m.flight_time
    );
    check_log(&log, &s, 0.01);
}

#[test]
fn obstacle_scenarios_stay_feasible_and_clear() {
    for name in ["gate", "corridor", "loop"] {
        let s = Scenario::builtin(name).unwrap();
        let (log, m) = fly(name);
        assert!(m.success, "{name}: {m:?}");
        assert!(m.min_clearance > 0.0);
        assert!(!m.collided);
        check_log(&log, &s, 0.01);
    }
}

#[test]
fn range_limited_sensing_replans_on_new_obstacles() {
    let s = Scenario::builtin("sudden_obstacle").unwrap();
    assert!(matches!(s.sensing, Sensing::RangeLimited { .. }));
    let (log, m) = fly("sudden_obstacle");
    assert!(m.success, "{m:?}");
    assert!(log
        .events
        .iter()
        .any(|e| e.trigger == adaptive_mpcc::sim::Trigger::Collision));
}

#[test]
fn flight_log_csv_round_trip() {
    let (log, _) = fly("empty");
    let csv = log.ticks_csv();
    let back = FlightLog::read_ticks(csv.as_bytes()).unwrap();
    assert_eq!(back.len(), log.ticks.len());
    for (a, b) in back.iter().zip(&log.ticks) {
        assert!((a.t - b.t).abs() < 1e-12);
        assert!((a.position - b.position).norm() < 1e-12);
        assert!((a.eta - b.eta).abs() < 1e-12);
    }
}

#[test]
fn episodes_are_deterministic_in_either_execution_mode() {
    let s = Scenario::builtin("forest").unwrap();
    let cfg = PlannerConfig::default();
    let seeds = [0, 1, 2];
    let json = |runs: Vec<adaptive_mpcc::Result<Metrics>>| -> Vec<String> {
        runs.into_iter().map(|r| r.unwrap().to_json()).collect()
    };
    let parallel = json(run_seeds(&s, &cfg, &seeds, Execution::Parallel));
    let sequential = json(run_seeds(&s, &cfg, &seeds, Execution::Sequential));
    assert_eq!(parallel, sequential);
    assert_eq!(parallel[0], run_episode(&s, &cfg).unwrap().1.to_json());
    assert_ne!(parallel[0], parallel[1]);
}

#[test]
fn endpoint_inside_obstacle_is_rejected() {
    let mut s = Scenario::builtin("gate").unwrap();
    s.start = s.gate_center().unwrap() + adaptive_mpcc::Vec3::new(0.0, 2.0, 0.0);
    match run_episode(&s, &PlannerConfig::default()) {
        Err(PlannerError::InvalidEndpoint { .. }) => {}
        other => panic!("{:?}", other.map(|(_, m)| m)),
    }
}

#[test]
fn timing_appears_only_on_request() {
    let s = Scenario::builtin("empty").unwrap();
    let mut cfg = PlannerConfig::default();
    assert!(run_episode(&s, &cfg).unwrap().1.timing.is_none());
    cfg.sim.record_timing = true;
    let t = run_episode(&s, &cfg).unwrap().1.timing.unwrap();
    assert!(t.low.count > 0 && t.high.count > t.low.count);
}
