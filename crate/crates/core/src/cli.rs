//! Command-line front end. Everything here is reachable as library calls:
//! [`cmd_run`] and [`cmd_bench`] do the work, [`main_with_args`] only parses
//! flags and maps outcomes to exit codes.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::controller::ControllerConfig;
use crate::error::Error;
use crate::sim::{
    self, compute_metrics, load_scenario, scaling_scenario, Metrics, NoiseParams, SimulationLog,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;
pub const EXIT_STRICT: i32 = 3;

/// Constraint violation above which `--strict` fails a run, in meters.
pub const STRICT_VIOLATION_LIMIT: f64 = 0.1;

pub const BENCH_FILE: &str = "bench_summary.csv";

#[derive(Debug, Parser)]
#[command(
    name = "cnmpc",
    version,
    about = "Centralized NMPC for fleets of micro aerial vehicles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario in closed loop and write logs.
    Run {
        /// Built-in scenario name or path to a scenario TOML file.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Disable state noise.
        #[arg(long)]
        no_noise: bool,
        /// Number of penalty rounds per solve.
        #[arg(long)]
        penalty_iters: Option<usize>,
        /// Fail on solver aborts or constraint violations above 0.1 m.
        #[arg(long)]
        strict: bool,
    },
    /// Run the scaling scenario over a range of fleet sizes and tabulate solver times.
    Bench {
        /// Fleet sizes as `A..B`, inclusive.
        #[arg(long, value_parser = parse_agent_range)]
        agents: (usize, usize),
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

fn parse_agent_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected A..B, got `{s}`"))?;
    let a: usize = a
        .trim()
        .parse()
        .map_err(|_| format!("bad lower bound `{a}`"))?;
    let b: usize = b
        .trim()
        .parse()
        .map_err(|_| format!("bad upper bound `{b}`"))?;
    if a < 2 || a > b {
        return Err(format!("need 2 <= A <= B, got {a}..{b}"));
    }
    Ok((a, b))
}

#[derive(Debug, Clone)]
pub struct RunRequest {
    pub scenario: String,
    pub seed: u64,
    pub out: PathBuf,
    pub noise: bool,
    pub penalty_iterations: Option<usize>,
    pub config: ControllerConfig,
}

impl RunRequest {
    pub fn new(scenario: impl Into<String>, out: impl Into<PathBuf>) -> Self {
        Self {
            scenario: scenario.into(),
            seed: 0,
            out: out.into(),
            noise: true,
            penalty_iterations: None,
            config: ControllerConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: SimulationLog,
    pub metrics: Metrics,
}

impl RunOutcome {
    /// True when the run would fail `--strict`.
    pub fn breaches_strict(&self) -> bool {
        self.metrics.aborted_steps > 0
            || self.metrics.max_constraint_violation() > STRICT_VIOLATION_LIMIT
    }
}

/// Runs a scenario and writes the trajectory CSV, solver CSV and metrics TOML.
pub fn cmd_run(req: &RunRequest) -> Result<RunOutcome, Error> {
    let mut sc = load_scenario(&req.scenario)?;
    if !req.noise {
        sc.noise = NoiseParams::disabled();
    }
    if let Some(k) = req.penalty_iterations {
        sc.controller_overrides.penalty_iterations = Some(k);
    }
    let cfg = sc.controller_overrides.apply(&req.config);
    let log = sim::run_scenario(&sc, &req.config, req.seed)?;
    let metrics = compute_metrics(&log, &sc, &cfg);

    create_dir(&req.out)?;
    log.save_csvs(&req.out)?;
    let path = req.out.join(sim::METRICS_FILE);
    std::fs::write(&path, metrics.to_toml()?).map_err(|e| Error::io(&path, e))?;
    Ok(RunOutcome { log, metrics })
}

/// One row of the benchmark table. Times are milliseconds.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BenchRow {
    pub n_agents: usize,
    pub mean_ms: f64,
    pub max_ms: f64,
    pub min_ms: f64,
    pub max_safety_violation_m: f64,
    pub max_obstacle_violation_m: f64,
}

/// Aggregates per-trial metrics for one fleet size. The mean is weighted by
/// the number of timed steps in each trial.
pub fn aggregate_bench(n_agents: usize, trials: &[(Metrics, usize)]) -> BenchRow {
    let total: usize = trials.iter().map(|(_, k)| k).sum();
    let mean = trials
        .iter()
        .map(|(m, k)| m.solver_time_mean * *k as f64)
        .sum::<f64>()
        / total.max(1) as f64;
    let fold = |f: fn(&Metrics) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
        trials.iter().map(|(m, _)| f(m)).fold(init, pick)
    };
    BenchRow {
        n_agents,
        mean_ms: mean * 1e3,
        max_ms: fold(|m| m.solver_time_max, f64::NEG_INFINITY, f64::max) * 1e3,
        min_ms: fold(|m| m.solver_time_min, f64::INFINITY, f64::min) * 1e3,
        max_safety_violation_m: fold(|m| m.max_safety_violation, 0.0, f64::max),
        max_obstacle_violation_m: fold(|m| m.max_obstacle_penetration, 0.0, f64::max),
    }
}

/// Runs `scaling_<n>` for every fleet size in `agents`, `trials` times each
/// with seeds `seed, seed + 1, ...`, and writes `bench_summary.csv`.
///
/// Runs are sequential so that timings do not compete for cores.
pub fn cmd_bench(
    agents: (usize, usize),
    trials: usize,
    seed: u64,
    out: &Path,
    config: &ControllerConfig,
) -> Result<Vec<BenchRow>, Error> {
    let (lo, hi) = agents;
    if lo < 2 || lo > hi {
        return Err(Error::InvalidConfig(format!(
            "agent range must satisfy 2 <= A <= B, got {lo}..{hi}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for n in lo..=hi {
        let sc = scaling_scenario(n);
        let cfg = sc.controller_overrides.apply(config);
        let mut per_trial = Vec::with_capacity(trials);
        for t in 0..trials {
            let log = sim::run_scenario(&sc, config, seed.wrapping_add(t as u64))?;
            let timed = log.records.len().saturating_sub(1).max(1);
            per_trial.push((compute_metrics(&log, &sc, &cfg), timed));
        }
        rows.push(aggregate_bench(n, &per_trial));
    }

    create_dir(out)?;
    let path = out.join(BENCH_FILE);
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

pub fn format_bench_table(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>8} {:>10} {:>10} {:>10} {:>14} {:>14}",
        "agents", "mean_ms", "max_ms", "min_ms", "safety_viol_m", "obstacle_viol_m"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>8} {:>10.3} {:>10.3} {:>10.3} {:>14.4} {:>14.4}",
            r.n_agents,
            r.mean_ms,
            r.max_ms,
            r.min_ms,
            r.max_safety_violation_m,
            r.max_obstacle_violation_m
        );
    }
    s
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn print_run_summary(out: &RunOutcome) {
    let m = &out.metrics;
    println!("scenario            {}", m.scenario);
    println!("seed                {}", m.seed);
    println!("agents              {}", m.n_agents);
    match m.min_pairwise_distance {
        Some(d) => println!("min distance [m]    {d:.4}"),
        None => println!("min distance [m]    -"),
    }
    println!("safety viol. [m]    {:.4}", m.max_safety_violation);
    println!("obstacle viol. [m]  {:.4}", m.max_obstacle_penetration);
    println!(
        "solve time [ms]     mean {:.3}  max {:.3}  min {:.3}",
        m.solver_time_mean * 1e3,
        m.solver_time_max * 1e3,
        m.solver_time_min * 1e3
    );
    let worst = m.final_tracking_error.iter().cloned().fold(0.0, f64::max);
    println!("final error [m]     {worst:.4}");
    println!("aborted steps       {}", m.aborted_steps);
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::UnknownScenario(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            no_noise,
            penalty_iters,
            strict,
        } => {
            let req = RunRequest {
                scenario,
                seed,
                out,
                noise: !no_noise,
                penalty_iterations: penalty_iters,
                config: ControllerConfig::default(),
            };
            match cmd_run(&req) {
                Ok(outcome) => {
                    print_run_summary(&outcome);
                    if strict && outcome.breaches_strict() {
                        eprintln!("error: strict mode: aborted solves or constraint violation above {STRICT_VIOLATION_LIMIT} m");
                        EXIT_STRICT
                    } else {
                        EXIT_OK
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        Command::Bench {
            agents,
            trials,
            seed,
            out,
        } => match cmd_bench(agents, trials, seed, &out, &ControllerConfig::default()) {
            Ok(rows) => {
                print!("{}", format_bench_table(&rows));
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code_for(&e)
            }
        },
    }
}
