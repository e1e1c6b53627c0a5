use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptive_mpcc::diagnostics::{gradient_suite, GradientSuiteOptions, FREE_TOLERANCE, NEAR_TOLERANCE};
use adaptive_mpcc::parallel::Execution;
use adaptive_mpcc::sim::{
    ablate_easa, run_episode, run_sweep, write_atomic, FlightLog, Metrics, Scenario, SweepSpec,
    BUILTIN_SCENARIOS,
};
use adaptive_mpcc::{PlannerConfig, PlannerError};
use clap::{Args, Parser, Subcommand};

/// Closed-loop simulator for the risk-adaptive MPCC planner.
///
/// Log verbosity is controlled with RUST_LOG.
#[derive(Parser)]
#[command(name = "mpcc-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fly one scenario and write its flight log and metrics.
    Run(RunArgs),
    /// Run a scenario over a parameter grid and seeds.
    Sweep(SweepArgs),
    /// Compare every analytic cost gradient with finite differences.
    CheckGradients(GradientArgs),
    /// Print the default planner configuration.
    DefaultConfig,
}

#[derive(Args)]
struct Common {
    /// Planner configuration file (TOML). Overrides a configuration embedded
    /// in the scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario file (TOML) or built-in name.
    #[arg(long, default_value = "gate")]
    scenario: String,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also fly with the risk-weighted speed term disabled; outputs get
    /// `_on` and `_off` suffixes.
    #[arg(long)]
    ablate_easa: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Sweep specification file (TOML).
    #[arg(long)]
    sweep: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run cells one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct GradientArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random states per region.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, hide = true)]
    inject_sign_flip: bool,
}

/// Failures split by exit code: bad input is 2, planner failure is 1.
enum Failure {
    Input(String),
    Planner(String),
}

impl From<PlannerError> for Failure {
    fn from(e: PlannerError) -> Self {
        match e {
            PlannerError::Config(_)
            | PlannerError::MapFormat { .. }
            | PlannerError::UnknownGenerator(_)
            | PlannerError::InvalidEndpoint { .. }
            | PlannerError::InvalidGrid(_)
            | PlannerError::Io(_) => Failure::Input(e.to_string()),
            _ => Failure::Planner(e.to_string()),
        }
    }
}

fn load_inputs(common: &Common) -> Result<(Scenario, PlannerConfig), Failure> {
    let path = Path::new(&common.scenario);
    let mut scenario = if path.exists() {
        Scenario::load(path)?
    } else {
        Scenario::builtin(&common.scenario).ok_or_else(|| {
            Failure::Input(format!(
                "no scenario file `{}` and no built-in of that name (built-ins: {})",
                common.scenario,
                BUILTIN_SCENARIOS.join(", ")
            ))
        })?
    };
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    let config = match &common.config {
        Some(p) => PlannerConfig::load(p)?,
        None => scenario.planner.clone().unwrap_or_default(),
    };
    Ok((scenario, config))
}

fn write_outputs(out: &Path, suffix: &str, log: &FlightLog, metrics: &Metrics) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    let io = |e: PlannerError| Failure::Input(e.to_string());
    write_atomic(&out.join(format!("flight_log{suffix}.csv")), &log.ticks_csv()).map_err(io)?;
    write_atomic(&out.join(format!("metrics{suffix}.json")), &metrics.to_json()).map_err(io)?;
    Ok(())
}

fn describe(m: &Metrics) -> String {
    let outcome = if m.success {
        "reached goal".to_string()
    } else {
        m.failure.clone().unwrap_or_else(|| "failed".into())
    };
    format!(
        "{} seed {} easa {}: {outcome}, {:.2} s, {:.2} m, max speed {:.2} m/s, min clearance {:.3} m",
        m.scenario,
        m.seed,
        if m.easa_enabled { "on" } else { "off" },
        m.flight_time,
        m.path_length,
        m.max_speed,
        m.min_clearance
    )
}

fn cmd_run(args: &RunArgs) -> Result<bool, Failure> {
    let (scenario, config) = load_inputs(&args.common)?;
    if args.ablate_easa {
        let a = ablate_easa(&scenario, &config, Execution::Parallel)?;
        for (suffix, (log, m)) in [("_on", &a.on), ("_off", &a.off)] {
            write_outputs(&args.out, suffix, log, m)?;
            println!("{}", describe(m));
        }
        Ok(a.on.1.success && a.off.1.success)
    } else {
        let (log, m) = run_episode(&scenario, &config)?;
        write_outputs(&args.out, "", &log, &m)?;
        println!("{}", describe(&m));
        Ok(m.success)
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<bool, Failure> {
    let (scenario, config) = load_inputs(&args.common)?;
    let spec = SweepSpec::load(&args.sweep)?;
    let execution = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result = run_sweep(
        &spec,
        &scenario,
        &config,
        execution,
        Some(&args.out.join("cells")),
    )?;
    let io = |e: PlannerError| Failure::Input(e.to_string());
    write_atomic(&args.out.join("rows.csv"), &result.rows_csv()).map_err(io)?;
    write_atomic(&args.out.join("summary.csv"), &result.summary_csv()).map_err(io)?;
    print!("{}", result.summary_csv());
    Ok(true)
}

fn cmd_check_gradients(args: &GradientArgs) -> Result<bool, Failure> {
    let config = match &args.config {
        Some(p) => PlannerConfig::load(p)?,
        None => PlannerConfig::default(),
    };
    let options = GradientSuiteOptions {
        trials: args.trials as usize,
        seed: args.seed,
        inject_sign_flip: args.inject_sign_flip,
    };
    let report = gradient_suite(&config, &options);
    println!("layer term         near        free        status");
    for t in &report.terms {
        println!(
            "{:<5} {:<12} {:<11.3e} {:<11.3e} {}",
            t.layer,
            t.term,
            t.worst_near,
            t.worst_free,
            if t.passed() { "ok" } else { "FAIL" }
        );
    }
    println!(
        "{} states per region; tolerance {NEAR_TOLERANCE:e} near obstacles, {FREE_TOLERANCE:e} in free space",
        report.trials
    );
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::CheckGradients(a) => cmd_check_gradients(a),
        Command::DefaultConfig => {
            print!("{}", PlannerConfig::default().to_toml_string());
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Planner(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
