//! Command-line front end: run a TOML config, a builtin benchmark, or a
//! convergence study.

pub mod benchmarks;
pub mod config;
pub mod output;
pub mod study;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use toml::Value;

use self::benchmarks::{parse_override, Params};
use self::config::RunConfig;
use crate::solver::{Simulation, TimeHistory};
use crate::{Error, Result};

/// Exit status for a run that finished.
pub const EXIT_OK: i32 = 0;
/// Exit status for invalid input (config, geometry, parameters, I/O).
pub const EXIT_CONFIG: i32 = 1;
/// Exit status for a numerical failure (Newton, linear solve, rotation branch).
pub const EXIT_NONCONVERGENCE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "viscobeam", version, about = "Geometrically exact viscoelastic beams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory (default: out/<name>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Time step [s].
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// End time [s].
    #[arg(long = "T", global = true, value_name = "T")]
    pub t_end: Option<f64>,
    /// Seed recorded in the manifest (runs are deterministic).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a TOML config.
    Run { config: PathBuf },
    /// Run a builtin benchmark.
    Bench {
        name: String,
        /// Parameter override, e.g. `--override n=40`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// `instantaneous` or `long-term` where the benchmark has phases.
        #[arg(long)]
        phase: Option<String>,
    },
    /// Error table over degrees and control-point counts.
    Converge {
        name: String,
        #[arg(long, value_delimiter = ',', required = true)]
        degrees: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        phase: Option<String>,
    },
    /// List the builtin benchmarks with their default parameters.
    List,
}

/// Maps an error to the process exit status.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Nonconvergence { .. } | Error::Solve(_) | Error::BranchAmbiguity { .. } => EXIT_NONCONVERGENCE,
        _ => EXIT_CONFIG,
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub name: String,
    pub dir: PathBuf,
    pub history: TimeHistory,
}

fn steps_csv(history: &TimeHistory) -> String {
    let mut s = String::from("step,t[s],iterations,residual,substeps,dissipation[J]\n");
    for r in &history.steps {
        let _ = writeln!(s, "{},{:e},{},{:e},{},{:e}", r.step, r.t, r.iterations, r.residual, r.substeps, r.dissipation);
    }
    s
}

/// Runs a config and writes `manifest.toml`, `probes.csv`, `steps.csv`,
/// `shape_final.txt` and any requested `shape_t<time>.txt` snapshots.
pub fn execute(config: &RunConfig, out: Option<&Path>) -> Result<RunOutcome> {
    let prepared = config.prepare()?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&prepared.name));
    let mut manifest = config.clone();
    manifest.output.dir = Some(dir.display().to_string());
    output::write(&dir, "manifest.toml", &manifest.to_toml()?)?;

    let mut sim = Simulation::new(prepared.scene, prepared.settings)?;
    for p in prepared.probes {
        sim.add_probe(p)?;
    }
    let samples = config.output.polyline_samples;
    output::write(&dir, "shape_initial.txt", &output::polylines_text(&sim, samples)?)?;

    let mut pending: Vec<f64> = config.output.snapshots.clone();
    pending.sort_by(f64::total_cmp);
    let slack = 1e-9 * sim.settings().dt;
    let mut snapshot_error = None;
    let history = sim.run_with(|s, _| {
        while let Some(&t) = pending.first() {
            if s.time() + slack < t || snapshot_error.is_some() {
                break;
            }
            pending.remove(0);
            let r = output::polylines_text(s, samples).and_then(|text| output::write(&dir, &format!("shape_t{t}.txt"), &text));
            if let Err(e) = r {
                snapshot_error = Some(e);
            }
        }
    });
    if let Some(e) = snapshot_error {
        return Err(e);
    }
    let history = history?;
    output::write(&dir, "probes.csv", &output::probe_csv(&history))?;
    output::write(&dir, "steps.csv", &steps_csv(&history))?;
    output::write(&dir, "shape_final.txt", &output::polylines_text(&sim, samples)?)?;
    Ok(RunOutcome { name: prepared.name, dir, history })
}

fn collect_overrides(list: &[String], phase: &Option<String>, cli: &Cli) -> Result<Params> {
    let mut ov = Params::new();
    for item in list {
        let (k, v) = parse_override(item)?;
        ov.insert(k, v);
    }
    if let Some(p) = phase {
        ov.insert("phase".into(), Value::String(p.clone()));
    }
    if let Some(dt) = cli.dt {
        ov.insert("dt".into(), Value::Float(dt));
    }
    if let Some(t) = cli.t_end {
        ov.insert("T".into(), Value::Float(t));
    }
    Ok(ov)
}

fn summary(outcome: &RunOutcome) -> String {
    let steps = outcome.history.steps.len();
    let iters: usize = outcome.history.steps.iter().map(|s| s.iterations).sum();
    let t = outcome.history.steps.last().map_or(0.0, |s| s.t);
    format!(
        "{}: {steps} steps to t = {t} s, {iters} Newton iterations; results in {}",
        outcome.name,
        outcome.dir.display()
    )
}

/// Runs the parsed command line and returns the message to print.
pub fn dispatch(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Run { config } => {
            let mut cfg = RunConfig::load(config)?;
            if cli.dt.is_some() {
                cfg.solver.dt = cli.dt;
            }
            if cli.t_end.is_some() {
                cfg.solver.t_end = cli.t_end;
            }
            if cli.seed.is_some() {
                cfg.seed = cli.seed;
            }
            Ok(summary(&execute(&cfg, cli.out.as_deref())?))
        }
        Command::Bench { name, overrides, phase } => {
            let ov = collect_overrides(overrides, phase, cli)?;
            let mut cfg = RunConfig::for_benchmark(name, &ov)?;
            cfg.seed = cli.seed;
            Ok(summary(&execute(&cfg, cli.out.as_deref())?))
        }
        Command::Converge { name, degrees, n, overrides, phase } => {
            let ov = collect_overrides(overrides, phase, cli)?;
            let report = study::convergence_study(name, degrees, n, &ov)?;
            let text = output::errors_csv(&report);
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out").join(format!("{name}-convergence")));
            output::write(&dir, "errors.csv", &text)?;
            Ok(format!("{text}written to {}", dir.join("errors.csv").display()))
        }
        Command::List => {
            let mut s = String::new();
            for name in benchmarks::NAMES {
                let params = benchmarks::resolve(name, &Params::new())?;
                let list: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let _ = writeln!(s, "{name}: {}", list.join(" "));
            }
            Ok(s.trim_end().to_string())
        }
    }
}

/// Entry point used by the binary; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(msg) => {
            println!("{msg}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
