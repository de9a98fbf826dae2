//! Command-line driver: builds or loads a scenario, runs seeded multistart
//! policy iteration and writes `trace.csv` and `summary.json`.
//!
//! Exit codes: 0 when at least one start converged, 2 for argument or
//! scenario errors, 3 for numerical failures, 4 when no start converged.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use teamvar_core::optimizer::{StartOutcome, StartStatus};
use teamvar_core::oracle::{brute_force, simulate, SimPolicy, BATCHES, BURN_IN, DEFAULT_ENUMERATION_CAP};
use teamvar_core::report::{fmt_sig12, trace_csv};
use teamvar_core::scenario::{load_scenario, scenario_to_json};
use teamvar_core::{microgrid, multistart, team_metrics, AlgorithmRun, Classification, DeterministicPolicy, Error, GameModel, NumericSettings};

pub const SUMMARY_FORMAT: &str = "teamvar-summary/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NO_CONVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "teamvar", version, about = "Team-variance minimization by decentralized policy iteration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run multistart policy iteration and write trace.csv and summary.json.
    Run(RunArgs),
    /// Write a scenario as a JSON scenario file.
    ExportScenario(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Builtin name ("microgrid") or path to a scenario JSON file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_starts: u64,
    /// Maximum evaluation and improvement passes per start.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iters: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "teamvar-out")]
    pub out: PathBuf,
    /// Compare against exhaustive enumeration of all deterministic policies.
    #[arg(long)]
    pub oracle: bool,
    /// Check the best policy against a simulated trajectory of this length.
    #[arg(long, value_name = "T")]
    pub simulate: Option<usize>,
    #[arg(long)]
    pub tie_tol: Option<f64>,
    #[arg(long)]
    pub solve_tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub scenario: String,
    /// Destination file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Builtin(String),
    File(PathBuf),
}

impl ScenarioSource {
    pub fn parse(s: &str) -> Self {
        match s {
            "microgrid" => Self::Builtin(s.into()),
            path => Self::File(path.into()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Builtin(name) => format!("builtin:{name}"),
            Self::File(path) => path.display().to_string(),
        }
    }

    pub fn load(&self, settings: &NumericSettings) -> Result<GameModel, Failure> {
        match self {
            Self::Builtin(_) => Ok(microgrid::default_microgrid()),
            Self::File(path) => load_scenario(path, settings).map_err(Failure::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioSource,
    pub seed: u64,
    pub n_starts: usize,
    pub max_iters: usize,
    pub settings: NumericSettings,
    pub out: PathBuf,
    pub oracle: bool,
    pub simulate: Option<usize>,
}

impl RunConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self, Failure> {
        let mut settings = NumericSettings::default();
        for (name, value, slot) in [("--tie-tol", args.tie_tol, &mut settings.tie_tol), ("--solve-tol", args.solve_tol, &mut settings.solve_tol)] {
            if let Some(v) = value {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Failure::parse(format!("{name} must be a finite non-negative number, got {v}")));
                }
                *slot = v;
            }
        }
        if args.simulate == Some(0) {
            return Err(Failure::parse("--simulate needs a positive horizon"));
        }
        Ok(Self {
            scenario: ScenarioSource::parse(&args.scenario),
            seed: args.seed,
            n_starts: args.n_starts as usize,
            max_iters: args.max_iters as usize,
            settings,
            out: args.out.clone(),
            oracle: args.oracle,
            simulate: args.simulate,
        })
    }
}

/// An error with the exit code it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn parse(message: impl Into<String>) -> Self {
        Self { code: EXIT_PARSE, message: message.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self { code: EXIT_NUMERICAL, message: format!("{}: {e}", path.display()) }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ScenarioParse(_) | Error::Io(_) => EXIT_PARSE,
            Error::MaxIters { .. } => EXIT_NO_CONVERGENCE,
            _ => EXIT_NUMERICAL,
        };
        Self { code, message: e.to_string() }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

/// Everything a run produced. `trace` and `summary` are what gets written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub exit_code: i32,
    pub trace: String,
    pub summary: Value,
    pub diagnostics: Vec<String>,
}

fn policy_json(game: &GameModel, u: &DeterministicPolicy) -> Value {
    game.players
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let decisions: Vec<Value> = u
                .player(i)
                .iter()
                .enumerate()
                .map(|(s, &a)| json!([p.state_labels[s], p.action_labels[a]]))
                .collect();
            json!({ "player": p.name, "decisions": decisions })
        })
        .collect()
}

/// JSON has no infinity; an unbounded derivative is written as null.
fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn classification_name(c: Classification) -> &'static str {
    match c {
        Classification::StrictLocalMin => "strict_local_min",
        Classification::FirstOrderStationary => "first_order_stationary",
    }
}

fn run_json(game: &GameModel, run: &AlgorithmRun) -> Value {
    let last = run.final_record();
    let certificate = run.certificate.as_ref().map(|c| {
        json!({
            "classification": classification_name(c.classification),
            "violations": c.violations,
            "min_directional_derivative": finite_or_null(c.min_directional_derivative),
        })
    });
    json!({
        "converged": run.converged,
        "iterations": run.iterations(),
        "initial_team_variance": run.records[0].team_variance,
        "final_team_variance": last.team_variance,
        "final_team_mean": last.team_mean,
        "policy": policy_json(game, &run.policy),
        "certificate": certificate,
    })
}

fn start_json(outcome: &StartOutcome) -> Value {
    let (status, error) = match outcome.status() {
        StartStatus::Converged => ("converged", None),
        StartStatus::MaxIters => ("max_iters", None),
        StartStatus::Failed(msg) => ("failed", Some(msg)),
    };
    let run = outcome.result.as_ref().ok();
    json!({
        "start": outcome.start,
        "status": status,
        "iterations": run.map(|r| r.iterations()),
        "initial_team_variance": run.map(|r| r.records[0].team_variance),
        "final_team_variance": run.map(|r| r.final_record().team_variance),
        "classification": run.and_then(|r| r.certificate.as_ref()).map(|c| classification_name(c.classification)),
        "error": error,
    })
}

fn oracle_json(game: &GameModel, best: Option<&AlgorithmRun>, settings: &NumericSettings) -> Result<Value, Failure> {
    let oracle = match brute_force(game, DEFAULT_ENUMERATION_CAP, settings) {
        Ok(o) => o,
        Err(e @ Error::TooLarge { .. }) => return Ok(json!({ "status": "skipped", "reason": e.to_string() })),
        Err(e) => return Err(e.into()),
    };
    let best_value = best.map(|r| r.final_record().team_variance);
    Ok(json!({
        "status": "ok",
        "policies_evaluated": oracle.table.len(),
        "skipped_multichain": oracle.skipped_multichain,
        "global_min": oracle.global_min_value,
        "argmin": oracle.argmin.iter().map(|u| policy_json(game, u)).collect::<Vec<_>>(),
        "best_run_value": best_value,
        "gap": best_value.map(|v| v - oracle.global_min_value),
        "best_run_matches": best.map(|r| oracle.argmin.contains(&r.policy)),
    }))
}

fn simulation_json(game: &GameModel, best: &AlgorithmRun, horizon: usize, seed: u64, settings: &NumericSettings) -> Result<Value, Failure> {
    let analytic = team_metrics(game, &best.policy, settings)?;
    let est = simulate(game, SimPolicy::Deterministic(&best.policy), horizon, seed)?;
    let var_err = (est.team_variance - analytic.team_variance).abs();
    let mean_err = (est.team_mean - analytic.team_mean).abs();
    Ok(json!({
        "horizon": horizon,
        "burn_in": BURN_IN,
        "batches": BATCHES.min(horizon),
        "seed": seed,
        "analytic_team_variance": analytic.team_variance,
        "simulated_team_variance": est.team_variance,
        "team_variance_se": est.team_variance_se,
        "analytic_team_mean": analytic.team_mean,
        "simulated_team_mean": est.team_mean,
        "team_mean_se": est.team_mean_se,
        "within_3se": var_err <= 3.0 * est.team_variance_se && mean_err <= 3.0 * est.team_mean_se,
    }))
}

/// Runs the optimizer and builds the output documents without touching the
/// filesystem except to read a scenario file.
pub fn execute(config: &RunConfig) -> Result<RunOutput, Failure> {
    let started = Instant::now();
    let game = config.scenario.load(&config.settings)?;
    let loaded = started.elapsed();
    let res = multistart(&game, config.n_starts, config.seed, config.max_iters, &config.settings)?;
    let optimized = started.elapsed();

    let trace = trace_csv(
        game.n_players(),
        res.starts.iter().filter_map(|o| o.result.as_ref().ok().map(|r| (o.start, r))),
    );
    let best = res.best_run();

    let mut diagnostics = Vec::new();
    for o in &res.starts {
        if let Err(e) = &o.result {
            diagnostics.push(format!("start {}: {e}", o.start));
        }
    }
    let converged = res.starts.iter().filter(|o| o.converged_run().is_some()).count();
    let hit_max = res.starts.iter().filter(|o| o.status() == StartStatus::MaxIters).count();
    let exit_code = if converged > 0 {
        EXIT_OK
    } else if hit_max > 0 {
        diagnostics.push(format!("no start converged within {} passes", config.max_iters));
        EXIT_NO_CONVERGENCE
    } else {
        diagnostics.push("every start failed".into());
        EXIT_NUMERICAL
    };

    let oracle = if config.oracle { Some(oracle_json(&game, best, &config.settings)?) } else { None };
    let simulation = match (config.simulate, best) {
        (Some(t), Some(run)) => Some(simulation_json(&game, run, t, config.seed, &config.settings)?),
        _ => None,
    };

    let best_json = match (res.best, best) {
        (Some(k), Some(run)) => {
            let mut v = run_json(&game, run);
            v["start"] = json!(k);
            v["report"] = serde_json::to_value(res.best_report.as_ref().expect("best has a report")).expect("report serializes");
            v
        }
        _ => Value::Null,
    };
    let summary = json!({
        "format": SUMMARY_FORMAT,
        "config": {
            "scenario": config.scenario.describe(),
            "seed": config.seed,
            "n_starts": config.n_starts,
            "max_iters": config.max_iters,
            "oracle": config.oracle,
            "simulate": config.simulate,
        },
        "settings": serde_json::to_value(config.settings).expect("settings serialize"),
        "players": game.players.iter().map(|p| json!({ "name": p.name, "states": p.n_states() })).collect::<Vec<_>>(),
        "counts": { "converged": converged, "max_iters": hit_max, "failed": res.starts.len() - converged - hit_max },
        "best": best_json,
        "starts": res.starts.iter().map(start_json).collect::<Vec<_>>(),
        "oracle": oracle,
        "simulation": simulation,
        "timing_ms": {
            "load": loaded.as_secs_f64() * 1e3,
            "optimize": (optimized - loaded).as_secs_f64() * 1e3,
            "total": started.elapsed().as_secs_f64() * 1e3,
        },
    });
    Ok(RunOutput { exit_code, trace, summary, diagnostics })
}

/// Writes `trace.csv` and `summary.json` into `out`.
pub fn write_outputs(out: &Path, output: &RunOutput) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let trace = out.join("trace.csv");
    std::fs::write(&trace, &output.trace).map_err(|e| Failure::io(&trace, e))?;
    let summary = out.join("summary.json");
    let text = serde_json::to_string_pretty(&output.summary).expect("summary serializes") + "\n";
    std::fs::write(&summary, text).map_err(|e| Failure::io(&summary, e))
}

/// Full `run` command: execute, write files, report on stderr. Returns the
/// exit code.
pub fn run(config: &RunConfig) -> i32 {
    let output = match execute(config) {
        Ok(o) => o,
        Err(f) => {
            eprintln!("error: {f}");
            return f.code;
        }
    };
    for d in &output.diagnostics {
        eprintln!("{d}");
    }
    if let Err(f) = write_outputs(&config.out, &output) {
        eprintln!("error: {f}");
        return f.code;
    }
    let best = &output.summary["best"];
    if let Some(v) = best["final_team_variance"].as_f64() {
        println!(
            "best team variance {} after {} iterations (start {})",
            fmt_sig12(v),
            best["iterations"],
            best["start"]
        );
    }
    println!("wrote {}", config.out.display());
    output.exit_code
}

pub fn export(args: &ExportArgs) -> i32 {
    let game = match ScenarioSource::parse(&args.scenario).load(&NumericSettings::default()) {
        Ok(g) => g,
        Err(f) => {
            eprintln!("error: {f}");
            return f.code;
        }
    };
    match std::fs::write(&args.out, scenario_to_json(&game) + "\n") {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", Failure::io(&args.out, e));
            EXIT_NUMERICAL
        }
    }
}

pub fn main_with(cli: Cli) -> i32 {
    match cli.command {
        Command::Run(args) => match RunConfig::from_args(&args) {
            Ok(config) => run(&config),
            Err(f) => {
                eprintln!("error: {f}");
                f.code
            }
        },
        Command::ExportScenario(args) => export(&args),
    }
}
