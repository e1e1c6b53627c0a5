use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mpcc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpcc-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_log_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = mpcc(&["run", "--scenario", "empty", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("reached goal"));
    let log = fs::read_to_string(dir.path().join("flight_log.csv")).unwrap();
    assert_eq!(
        log.lines().next(),
        Some("t,x,y,z,vx,vy,vz,ax,ay,az,clearance,eta")
    );
    let metrics = fs::read_to_string(dir.path().join("metrics.json")).unwrap();
    assert!(metrics.contains("\"success\": true"));
    assert!(!metrics.contains("timing"));
}

#[test]
fn ablation_writes_paired_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = mpcc(&[
        "run",
        "--scenario",
        "gate",
        "--ablate-easa",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    for f in [
        "flight_log_on.csv",
        "flight_log_off.csv",
        "metrics_on.json",
        "metrics_off.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let off = fs::read_to_string(dir.path().join("metrics_off.json")).unwrap();
    assert!(off.contains("\"easa_enabled\": false"));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "version = 1\n[high_mpcc]\nlambda = [1.0, 2.0, 3.0]\n").unwrap();
    let o = mpcc(&[
        "run",
        "--scenario",
        "empty",
        "--config",
        path(&cfg),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("metrics.json").exists());
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let o = mpcc(&["run", "--scenario", "no_such_map"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("built-ins"));
}

#[test]
fn default_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = mpcc(&["default-config"]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, stdout(&o)).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(
        mpcc(&["run", "--scenario", "empty", "--out", path(&a)])
            .status
            .code(),
        Some(0)
    );
    let with = mpcc(&[
        "run",
        "--scenario",
        "empty",
        "--config",
        path(&cfg),
        "--out",
        path(&b),
    ]);
    assert_eq!(with.status.code(), Some(0));
    assert_eq!(
        fs::read(a.join("metrics.json")).unwrap(),
        fs::read(b.join("metrics.json")).unwrap()
    );
}

#[test]
fn single_cell_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sweep.toml");
    fs::write(
        &spec,
        "parameter = \"density\"\nvalues = [0.04]\nseeds = 1\nfirst_seed = 3\n",
    )
    .unwrap();
    let scenario = dir.path().join("forest.toml");
    fs::write(
        &scenario,
        "name = \"forest\"\nstart = [1.0, 0.0, 1.0]\ngoal = [39.0, 0.0, 1.0]\n\n[map]\ngenerator = \"forest\"\ndensity = 0.04\n",
    )
    .unwrap();
    let sweep = dir.path().join("sweep");
    let o = mpcc(&[
        "sweep",
        "--scenario",
        path(&scenario),
        "--sweep",
        path(&spec),
        "--sequential",
        "--out",
        path(&sweep),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("density,runs,successes"));
    let run = dir.path().join("run");
    let o = mpcc(&[
        "run",
        "--scenario",
        path(&scenario),
        "--seed",
        "3",
        "--out",
        path(&run),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let json =
        |p: &Path| -> serde_json::Value { serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap() };
    let cell = json(&sweep.join("cells").join("cell_0_seed_3.json"));
    assert_eq!(cell["metrics"], json(&run.join("metrics.json")));
    assert_eq!(cell["value"], 0.04);
    assert_eq!(
        fs::read_to_string(sweep.join("rows.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
}

#[test]
fn gradient_check_passes_and_flags_broken_gradients() {
    let ok = mpcc(&["check-gradients", "--trials", "5"]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(stdout(&ok).matches(" ok").count(), 8);
    let broken = mpcc(&["check-gradients", "--trials", "5", "--inject-sign-flip"]);
    assert_eq!(broken.status.code(), Some(1));
    assert_eq!(stdout(&broken).matches("FAIL").count(), 8);
    assert_eq!(mpcc(&["check-gradients", "--trials", "0"]).status.code(), Some(2));
}
