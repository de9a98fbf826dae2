//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use teamvar_core::metrics::{team_analyses, team_difference_from_analyses};
use teamvar_core::oracle::{brute_force, random_game, simulate, SimPolicy, DEFAULT_ENUMERATION_CAP};
use teamvar_core::*;

const S: NumericSettings = NumericSettings::DEFAULT;

// pinned tolerances
const MICROGRID_BEST_MAX: f64 = 4.3540;
const MICROGRID_PUBLISHED: f64 = 4.3440;
const MICROGRID_ITERS_MAX: usize = 10;
const IDENTITY_TOL: f64 = 1e-10;
const POISSON_TOL: f64 = 1e-9;
const DIFFERENCE_TOL: f64 = 1e-8;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const FD_ABS_TOL: f64 = 1e-8;
const SIM_HORIZON: usize = 1_000_000;
const SIM_SIGMAS: f64 = 3.0;
// summation rounding over the horizon when the batch SE collapses to zero
const SIM_FLOOR: f64 = 1e-9;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_teamvar")
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("teamvar {} exited with {}: {}", args.join(" "), out.status, String::from_utf8_lossy(&out.stderr))
    })
}

/// Team-variance column of each run block in a trace CSV.
fn trace_blocks(csv: &str) -> Vec<(usize, Vec<f64>)> {
    let mut blocks: Vec<(usize, Vec<f64>)> = Vec::new();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let run: usize = cols[0].parse().unwrap();
        let j: f64 = cols[3].parse().unwrap();
        match blocks.last_mut() {
            Some((r, js)) if *r == run => js.push(j),
            _ => blocks.push((run, vec![j])),
        }
    }
    blocks
}

fn strictly_decreasing(blocks: &[(usize, Vec<f64>)]) -> Result<(), String> {
    for (run, js) in blocks {
        if let Some(w) = js.windows(2).find(|w| !(w[1] < w[0])) {
            return Err(format!("run {run}: team variance {} followed by {}", w[0], w[1]));
        }
    }
    Ok(())
}

fn random_games(seed: u64, count: usize) -> Vec<(GameModel, DeterministicPolicy, DeterministicPolicy)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let g = random_game(&mut rng, 3, 5, 3);
            let u = DeterministicPolicy::random(&g, &mut rng);
            let v = DeterministicPolicy::random(&g, &mut rng);
            (g, u, v)
        })
        .collect()
}

fn microgrid_reproduction(dir: &Path) -> Outcome {
    let out = dir.join("c1");
    run_cli(&["run", "--scenario", "microgrid", "--n-starts", "100", "--seed", "7", "--out", out.to_str().unwrap()])?;
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let best = summary["best"]["final_team_variance"].as_f64().ok_or("no converged start")?;
    let iters = summary["best"]["iterations"].as_u64().unwrap() as usize;
    ensure(best <= MICROGRID_BEST_MAX, || format!("best team variance {best} > {MICROGRID_BEST_MAX}"))?;
    ensure(iters <= MICROGRID_ITERS_MAX, || format!("best run took {iters} iterations"))?;
    let initials: Vec<f64> = summary["starts"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|s| s["initial_team_variance"].as_f64())
        .collect();
    let low = initials.iter().cloned().fold(f64::INFINITY, f64::min);
    let high = initials.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ensure(low > MICROGRID_PUBLISHED && high.is_finite(), || format!("initial team variance {low} at or below the optimum"))?;
    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    strictly_decreasing(&trace_blocks(&csv))?;
    let counts = &summary["counts"];
    Ok(format!(
        "best J = {best:.6} <= {MICROGRID_BEST_MAX} in {iters} iterations; initial J in [{low:.3}, {high:.3}]; {} converged, {} failed, all monotone",
        counts["converged"], counts["failed"]
    ))
}

fn identity_suite() -> Outcome {
    let games = random_games(2, 120);
    let mut worst = [0.0f64; 4];
    for (k, (game, u, v)) in games.iter().enumerate() {
        let ctx = |e: Error| format!("game {k}: {e}");
        let r = team_metrics(game, u, &S).map_err(ctx)?;
        let n = game.n_players() as f64;
        let within: f64 = r.per_player_variance.iter().sum();
        let between: f64 = r.per_player_mean.iter().map(|m| (m - r.team_mean).powi(2)).sum();
        worst[0] = worst[0].max((r.team_variance - within - between).abs());
        for y in [-2.5, r.team_mean, 0.7, 3.1] {
            let jy = pseudo_team_variance(game, u, PseudoMean(y), &S).map_err(ctx)?;
            worst[1] = worst[1].max((jy - r.team_variance - n * (y - r.team_mean).powi(2)).abs());
        }
        for (i, p) in game.players.iter().enumerate() {
            let (tm, rewards) = induced_chain(p, u.player(i)).map_err(ctx)?;
            let cost: Vec<f64> = rewards.iter().map(|x| (x - r.team_mean).powi(2)).collect();
            let a = solve_poisson(&tm, &cost, &S).map_err(ctx)?;
            worst[2] = worst[2].max(a.poisson_residual(&tm, &cost));
        }
        let (mu, analyses) = team_analyses(game, u, &S).map_err(ctx)?;
        let base = team_difference_from_analyses(game, u, v, mu, &analyses, &S).map_err(ctx)?;
        for shift in [-40.0, 3.5, 1e3] {
            let moved: Vec<ChainAnalysis> = analyses
                .iter()
                .cloned()
                .map(|mut a| {
                    a.potential.iter_mut().for_each(|g| *g += shift);
                    a
                })
                .collect();
            let d = team_difference_from_analyses(game, u, v, mu, &moved, &S).map_err(ctx)?;
            worst[3] = worst[3].max((d - base).abs());
        }
    }
    let tols = [IDENTITY_TOL, IDENTITY_TOL, POISSON_TOL, IDENTITY_TOL];
    let names = ["decomposition", "pseudo-mean identity", "Poisson residual", "potential shift"];
    for ((w, t), name) in worst.iter().zip(tols).zip(names) {
        ensure(*w <= t, || format!("{name} error {w:e} > {t:e}"))?;
    }
    Ok(format!(
        "{} games; max errors {:.1e}, {:.1e}, {:.1e}, {:.1e}",
        games.len(),
        worst[0],
        worst[1],
        worst[2],
        worst[3]
    ))
}

fn sensitivity_formulas() -> Outcome {
    let triples = random_games(3, 120);
    let (mut worst_diff, mut worst_deriv) = (0.0f64, 0.0f64);
    for (k, (game, u, v)) in triples.iter().enumerate() {
        let ctx = |e: Error| format!("triple {k}: {e}");
        let direct = team_metrics(game, v, &S).map_err(ctx)?.team_variance - team_metrics(game, u, &S).map_err(ctx)?.team_variance;
        let formula = team_difference(game, u, v, &S).map_err(ctx)?;
        worst_diff = worst_diff.max((formula - direct).abs());

        let j = |delta: f64| -> Result<f64, String> {
            let mix = PolicyMixture::new(u.clone(), v.clone(), delta).map_err(ctx)?;
            Ok(mixture_team_metrics(game, &mix, &S).map_err(ctx)?.team_variance)
        };
        let j0 = j(0.0)?;
        let fd = 2.0 * (j(FD_STEP)? - j0) / FD_STEP - (j(2.0 * FD_STEP)? - j0) / (2.0 * FD_STEP);
        let analytic = team_derivative(game, u, v, &S).map_err(ctx)?;
        let err = (analytic - fd).abs();
        ensure(err <= FD_ABS_TOL || err <= FD_REL_TOL * analytic.abs(), || {
            format!("triple {k}: derivative {analytic} vs finite difference {fd}")
        })?;
        if analytic.abs() > FD_ABS_TOL {
            worst_deriv = worst_deriv.max(err / analytic.abs());
        }
    }
    ensure(worst_diff <= DIFFERENCE_TOL, || format!("difference formula error {worst_diff:e}"))?;
    Ok(format!(
        "{} triples; difference error {worst_diff:.1e}; derivative relative error {worst_deriv:.1e}",
        triples.len()
    ))
}

fn toy_game() -> GameModel {
    let player = |rewards: [f64; 2]| {
        let choices = vec![rewards.iter().enumerate().map(|(a, &r)| Choice { action: a, reward: r, next: vec![1.0] }).collect()];
        PlayerModel::new("p", vec!["s".into()], vec!["1".into(), "2".into()], choices, 1e-12).unwrap()
    };
    GameModel::new(vec![player([1.0, 2.0]), player([3.0, 2.0])]).unwrap()
}

fn oracle_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut games, mut fixed_points) = (0, 0);
    while games < 60 {
        let game = random_game(&mut rng, 2, 3, 3);
        if game.joint_policy_count() > 64.0 {
            continue;
        }
        games += 1;
        let oracle = brute_force(&game, DEFAULT_ENUMERATION_CAP, &S).map_err(|e| format!("game {games}: {e}"))?;
        for _ in 0..5 {
            let init = DeterministicPolicy::random(&game, &mut rng);
            let run = run_algorithm1(&game, &init, 64, &S).and_then(|r| r.require_converged(64)).map_err(|e| format!("game {games}: {e}"))?;
            fixed_points += 1;
            let cert = run.certificate.as_ref().unwrap();
            ensure(cert.all_satisfied(), || format!("game {games}: fixed point with {} violations", cert.violations))?;
            let v = run.final_record().team_variance;
            ensure(oracle.global_min_value <= v, || format!("game {games}: run value {v} below global min {}", oracle.global_min_value))?;
        }
    }
    let toy = toy_game();
    let res = multistart(&toy, 8, 0, 10, &S).map_err(|e| e.to_string())?;
    let best = res.best_run().ok_or("toy: no converged start")?;
    let value = best.final_record().team_variance;
    let target = DeterministicPolicy::new(vec![vec![1], vec![1]]);
    ensure(value == 0.0 && best.policy == target, || format!("toy: best {value} at {:?}", best.policy))?;
    let toy_min = brute_force(&toy, DEFAULT_ENUMERATION_CAP, &S).unwrap().global_min_value;
    ensure(toy_min == 0.0, || format!("toy global min {toy_min}"))?;
    Ok(format!("{games} games, {fixed_points} fixed points certified and dominated; toy multistart hits 0 at (2,2)"))
}

fn within_band(analytic: f64, est: f64, se: f64) -> bool {
    (est - analytic).abs() <= SIM_SIGMAS * se + SIM_FLOOR
}

fn simulation_consistency() -> Outcome {
    let grid = microgrid::default_microgrid();
    let res = multistart(&grid, 20, 7, 100, &S).map_err(|e| e.to_string())?;
    let best = res.best_run().ok_or("microgrid: no converged start")?;
    let mut cases = vec![("microgrid".to_string(), grid.clone(), best.policy.clone())];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..10 {
        let g = random_game(&mut rng, 3, 5, 3);
        let u = DeterministicPolicy::random(&g, &mut rng);
        cases.push((format!("random game {k}"), g, u));
    }
    let mut worst = 0.0f64;
    for (k, (name, game, u)) in cases.iter().enumerate() {
        let analytic = team_metrics(game, u, &S).map_err(|e| format!("{name}: {e}"))?.team_variance;
        let est = simulate(game, SimPolicy::Deterministic(u), SIM_HORIZON, 1000 + k as u64).map_err(|e| format!("{name}: {e}"))?;
        ensure(within_band(analytic, est.team_variance, est.team_variance_se), || {
            format!("{name}: simulated {} vs analytic {analytic}, SE {}", est.team_variance, est.team_variance_se)
        })?;
        if est.team_variance_se > 0.0 {
            worst = worst.max((est.team_variance - analytic).abs() / est.team_variance_se);
        }
    }
    Ok(format!("{} policies at T = {SIM_HORIZON}; largest deviation {worst:.2} SE", cases.len()))
}

fn determinism(dir: &Path) -> Outcome {
    let traces: Vec<String> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.join(format!("c6{name}"));
            run_cli(&["run", "--scenario", "microgrid", "--n-starts", "30", "--seed", "11", "--out", out.to_str().unwrap()])?;
            Ok(std::fs::read_to_string(out.join("trace.csv")).unwrap())
        })
        .collect::<Result<_, String>>()?;
    ensure(traces[0] == traces[1], || "repeated runs produced different traces".into())?;

    let exported = dir.join("microgrid.json");
    run_cli(&["export-scenario", "--scenario", "microgrid", "--out", exported.to_str().unwrap()])?;
    let out = dir.join("c6file");
    run_cli(&["run", "--scenario", exported.to_str().unwrap(), "--n-starts", "30", "--seed", "11", "--out", out.to_str().unwrap()])?;
    let from_file = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    ensure(from_file == traces[0], || "reloaded scenario produced a different trace".into())?;

    let blocks = trace_blocks(&traces[0]);
    strictly_decreasing(&blocks)?;
    let rows: usize = blocks.iter().map(|(_, js)| js.len()).sum();
    Ok(format!("identical traces across repeats and scenario round trip; {} runs, {rows} rows strictly decreasing", blocks.len()))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: [(&str, Box<dyn Fn() -> Outcome>); 6] = [
        ("1 microgrid reproduction", Box::new(|| microgrid_reproduction(dir.path()))),
        ("2 identity suite", Box::new(identity_suite)),
        ("3 sensitivity formulas", Box::new(sensitivity_formulas)),
        ("4 oracle dominance and equilibrium witness", Box::new(oracle_dominance)),
        ("5 simulation consistency", Box::new(simulation_consistency)),
        ("6 determinism and monotone traces", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
