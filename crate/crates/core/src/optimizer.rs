//! Decentralized policy iteration on pseudo-variance costs.
//!
//! Every iteration evaluates the current joint policy once, broadcasts its
//! team mean as the coordination signal, and lets each player improve its
//! own action map against the cost `(r_i - mu)^2` using only its own
//! potential. The team variance strictly decreases until no player changes
//! a decision.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{dot, ChainAnalysis};
use crate::error::{Error, Result};
use crate::metrics::{pseudo_cost_analysis, team_analyses, team_metrics, PseudoMean, VarianceReport};
use crate::model::{validate_action_map, DeterministicPolicy, GameModel, PlayerModel};
use crate::settings::NumericSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub policy: DeterministicPolicy,
    pub team_mean: f64,
    pub team_variance: f64,
    /// `J_i(mu)` at this iteration's team mean.
    pub pseudo_variance: Vec<f64>,
    pub variance: Vec<f64>,
    pub mean: Vec<f64>,
    /// Decisions that differ from the previous iteration's policy.
    pub decisions_changed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    StrictLocalMin,
    FirstOrderStationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCertificate {
    /// `satisfied[i][s]`: no admissible action of player `i` in state `s`
    /// scores strictly below the current one.
    pub satisfied: Vec<Vec<bool>>,
    pub violations: usize,
    /// Minimum derivative over all single-decision deviations; `+inf` when
    /// no deviation exists.
    pub min_directional_derivative: f64,
    pub classification: Classification,
}

impl ConvergenceCertificate {
    pub fn all_satisfied(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmRun {
    pub policy: DeterministicPolicy,
    pub records: Vec<IterationRecord>,
    /// Present once a fixed point is reached.
    pub certificate: Option<ConvergenceCertificate>,
    pub converged: bool,
}

impl AlgorithmRun {
    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("a run has at least one record")
    }

    /// Index of the last evaluated policy.
    pub fn iterations(&self) -> usize {
        self.final_record().iteration
    }

    pub fn require_converged(self, max_iters: usize) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxIters { max_iters })
        }
    }
}

/// Score of action `a` in state `s`: `(r(s, a) - mu)^2 + sum_s' p(s'|s, a) g(s')`.
fn action_score(player: &PlayerModel, s: usize, a: usize, mu: f64, potential: &[f64]) -> f64 {
    let c = player.choice(s, a).expect("admissible");
    (c.reward - mu).powi(2) + dot(&c.next, potential)
}

/// One improvement step against a precomputed potential.
///
/// Among actions within `tie_tol` of the minimum score the current action is
/// kept when possible, otherwise the lowest action id wins.
pub fn improve_with_analysis(player: &PlayerModel, u_i: &[usize], mu: f64, analysis: &ChainAnalysis, tie_tol: f64) -> Vec<usize> {
    (0..player.n_states())
        .map(|s| {
            let scored: Vec<(usize, f64)> = player
                .admissible(s)
                .map(|a| (a, action_score(player, s, a, mu, &analysis.potential)))
                .collect();
            let best = scored.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
            let tied = |v: f64| v <= best + tie_tol;
            if scored.iter().any(|&(a, v)| a == u_i[s] && tied(v)) {
                u_i[s]
            } else {
                scored.iter().find(|&&(_, v)| tied(v)).expect("nonempty").0
            }
        })
        .collect()
}

/// Improves one player's action map given the coordination signal `mu_signal`.
pub fn improve_player(player: &PlayerModel, u_i: &[usize], mu_signal: f64, settings: &NumericSettings) -> Result<Vec<usize>> {
    validate_action_map(0, player, u_i)?;
    let analysis = pseudo_cost_analysis(player, u_i, PseudoMean(mu_signal), settings)?;
    Ok(improve_with_analysis(player, u_i, mu_signal, &analysis, settings.tie_tol))
}

/// `(player, state, score gain)` of every decision that changes from `u` to `next`.
fn score_gaps(game: &GameModel, u: &DeterministicPolicy, next: &DeterministicPolicy, mu: f64, analyses: &[ChainAnalysis]) -> Vec<(usize, usize, f64)> {
    let mut gaps = Vec::new();
    for (i, p) in game.players.iter().enumerate() {
        for s in 0..p.n_states() {
            let (old, new) = (u.player(i)[s], next.player(i)[s]);
            if old != new {
                let g = &analyses[i].potential;
                gaps.push((i, s, action_score(p, s, old, mu, g) - action_score(p, s, new, mu, g)));
            }
        }
    }
    gaps
}

struct Evaluation {
    report: VarianceReport,
    analyses: Vec<ChainAnalysis>,
}

fn evaluate(game: &GameModel, u: &DeterministicPolicy, settings: &NumericSettings) -> Result<Evaluation> {
    let report = team_metrics(game, u, settings)?;
    let mu = report.team_mean;
    let analyses = game
        .players
        .iter()
        .enumerate()
        .map(|(i, p)| pseudo_cost_analysis(p, u.player(i), PseudoMean(mu), settings).map_err(|e| e.for_player(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation { report, analyses })
}

/// Runs policy iteration from `init` for at most `max_iters` evaluation and
/// improvement passes.
///
/// A run that exhausts `max_iters` is returned with `converged == false` and
/// no certificate. Errors abort the run: a multichain policy, or a step that
/// fails to lower the team variance.
pub fn run_algorithm1(game: &GameModel, init: &DeterministicPolicy, max_iters: usize, settings: &NumericSettings) -> Result<AlgorithmRun> {
    init.validate(game)?;
    let mut policy = init.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut changed_prev = 0;
    let mut pending_gaps: Option<Vec<(usize, usize, f64)>> = None;

    for l in 0..max_iters {
        let eval = evaluate(game, &policy, settings).map_err(|e| match (e, records.last()) {
            (Error::Multichain { player: Some(player), .. }, Some(prev)) => Error::ImprovementMultichain {
                iteration: l,
                player,
                changed_states: (0..policy.player(player).len())
                    .filter(|&s| policy.player(player)[s] != prev.policy.player(player)[s])
                    .collect(),
            },
            (e, _) => e.at_iteration(l),
        })?;
        let mu = eval.report.team_mean;

        if let (Some(prev), Some(gaps)) = (records.last(), pending_gaps.take()) {
            // An increase is always a fault. A step whose changed decisions
            // carry stationary mass must lower the objective by at least the
            // mass-weighted score gain; steps that only touch states transient
            // under the new policy leave it unchanged.
            let current = eval.report.team_variance;
            let increased = current > prev.team_variance + settings.decrease_tol;
            let gain: f64 = gaps.iter().map(|&(i, s, gap)| eval.analyses[i].pi[s] * gap).sum();
            let stalled = gain > settings.decrease_tol && current >= prev.team_variance - settings.decrease_tol;
            if increased || stalled {
                return Err(Error::NotDecreasing {
                    iteration: l,
                    previous: prev.team_variance,
                    current,
                });
            }
        }

        let next = DeterministicPolicy::new(
            game.players
                .par_iter()
                .enumerate()
                .map(|(i, p)| improve_with_analysis(p, policy.player(i), mu, &eval.analyses[i], settings.tie_tol))
                .collect(),
        );

        records.push(IterationRecord {
            iteration: l,
            policy: policy.clone(),
            team_mean: mu,
            team_variance: eval.report.team_variance,
            pseudo_variance: eval.analyses.iter().map(|a| a.avg_cost).collect(),
            variance: eval.report.per_player_variance.clone(),
            mean: eval.report.per_player_mean.clone(),
            decisions_changed: changed_prev,
        });

        if next == policy {
            let certificate = certificate_from(game, &policy, mu, &eval.analyses, settings);
            return Ok(AlgorithmRun {
                policy,
                records,
                certificate: Some(certificate),
                converged: true,
            });
        }
        changed_prev = next.changed_decisions(&policy);
        let gaps = score_gaps(game, &policy, &next, mu, &eval.analyses);
        pending_gaps = Some(gaps);
        policy = next;
    }

    let policy = records.last().map(|r| r.policy.clone()).unwrap_or(policy);
    Ok(AlgorithmRun {
        policy,
        records,
        certificate: None,
        converged: false,
    })
}

fn certificate_from(
    game: &GameModel,
    u: &DeterministicPolicy,
    mu: f64,
    analyses: &[ChainAnalysis],
    settings: &NumericSettings,
) -> ConvergenceCertificate {
    let mut satisfied = Vec::with_capacity(game.n_players());
    let mut min_derivative = f64::INFINITY;
    for (i, p) in game.players.iter().enumerate() {
        let a = &analyses[i];
        let row = (0..p.n_states())
            .map(|s| {
                let current = u.player(i)[s];
                let here = action_score(p, s, current, mu, &a.potential);
                let mut ok = true;
                for alt in p.admissible(s).filter(|&alt| alt != current) {
                    let gap = action_score(p, s, alt, mu, &a.potential) - here;
                    ok &= gap >= -settings.tie_tol;
                    // derivative along the deviation that changes only (i, s)
                    min_derivative = min_derivative.min(a.pi[s] * gap);
                }
                ok
            })
            .collect::<Vec<bool>>();
        satisfied.push(row);
    }
    let violations = satisfied.iter().flatten().filter(|ok| !**ok).count();
    let classification = if min_derivative > settings.derivative_tol {
        Classification::StrictLocalMin
    } else {
        Classification::FirstOrderStationary
    };
    ConvergenceCertificate {
        satisfied,
        violations,
        min_directional_derivative: min_derivative,
        classification,
    }
}

/// Checks the elementwise optimality condition at `u` for every single-state
/// deviation of every player and classifies `u` from the directional
/// derivatives of those deviations.
pub fn check_necessary_condition(game: &GameModel, u: &DeterministicPolicy, settings: &NumericSettings) -> Result<ConvergenceCertificate> {
    let (mu, analyses) = team_analyses(game, u, settings)?;
    Ok(certificate_from(game, u, mu, &analyses, settings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StartStatus {
    Converged,
    MaxIters,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartOutcome {
    pub start: usize,
    pub init: DeterministicPolicy,
    pub result: Result<AlgorithmRun>,
}

impl StartOutcome {
    pub fn status(&self) -> StartStatus {
        match &self.result {
            Ok(run) if run.converged => StartStatus::Converged,
            Ok(_) => StartStatus::MaxIters,
            Err(e) => StartStatus::Failed(e.to_string()),
        }
    }

    pub fn converged_run(&self) -> Option<&AlgorithmRun> {
        self.result.as_ref().ok().filter(|r| r.converged)
    }
}

#[derive(Debug, Clone)]
pub struct MultistartResult {
    pub starts: Vec<StartOutcome>,
    /// Index into `starts` of the converged run with the smallest final team
    /// variance (lowest index on ties).
    pub best: Option<usize>,
    pub best_report: Option<VarianceReport>,
}

impl MultistartResult {
    pub fn best_run(&self) -> Option<&AlgorithmRun> {
        self.best.and_then(|k| self.starts[k].converged_run())
    }
}

/// Generator for the initial policy of start `start`.
pub fn start_rng(seed: u64, start: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64);
    rng
}

/// Runs policy iteration from `n_starts` uniform random initial policies.
/// Failed starts are reported, not propagated; the result depends only on
/// `(game, n_starts, seed, max_iters, settings)`.
pub fn multistart(game: &GameModel, n_starts: usize, seed: u64, max_iters: usize, settings: &NumericSettings) -> Result<MultistartResult> {
    if n_starts == 0 {
        return Err(Error::PolicyShape("n_starts must be at least 1".into()));
    }
    let starts: Vec<StartOutcome> = (0..n_starts)
        .into_par_iter()
        .map(|start| {
            let init = DeterministicPolicy::random(game, &mut start_rng(seed, start));
            let result = run_algorithm1(game, &init, max_iters, settings);
            StartOutcome { start, init, result }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (k, outcome) in starts.iter().enumerate() {
        if let Some(run) = outcome.converged_run() {
            let v = run.final_record().team_variance;
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((k, v));
            }
        }
    }
    let best_report = match best {
        Some((k, _)) => Some(team_metrics(game, &starts[k].converged_run().unwrap().policy, settings)?),
        None => None,
    };
    Ok(MultistartResult {
        starts,
        best: best.map(|(k, _)| k),
        best_report,
    })
}
