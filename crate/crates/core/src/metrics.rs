//! Team mean, team variance, pseudo variances and the sensitivity formulas
//! that drive policy improvement.
//!
//! Under separately controlled chains the team variance splits as
//! `J = sum_i J_i + sum_i (mu_i - mu)^2`, and replacing the team mean by a
//! constant `y` decouples the objective into per-player average-cost
//! problems with cost `(r_i - y)^2`. Every function here evaluates those
//! quantities exactly from stationary distributions; nothing is sampled.

use serde::{Deserialize, Serialize};

use crate::chain::{dot, solve_poisson, stationary_distribution, ChainAnalysis};
use crate::error::{Error, Result};
use crate::model::{induced_chain_for, mixed_chain_for, DeterministicPolicy, GameModel, InducedChain, PlayerModel, PolicyMixture};
use crate::settings::NumericSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub per_player_mean: Vec<f64>,
    pub per_player_variance: Vec<f64>,
    pub team_mean: f64,
    pub team_variance: f64,
    /// Sum of the per-player variances.
    pub within_sum: f64,
    /// Sum of squared deviations of player means from the team mean.
    pub between_sum: f64,
}

/// Constant stand-in for the team mean in the pseudo team variance.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PseudoMean(pub f64);

/// Mean and variance of one player's reward under a (possibly randomized)
/// induced chain.
pub(crate) fn chain_moments(chain: &InducedChain, settings: &NumericSettings) -> Result<(f64, f64)> {
    let pi = stationary_distribution(&chain.transition, settings)?;
    let mean = dot(&pi, &chain.mean_rewards());
    let variance = dot(&pi, &chain.squared_deviation(mean));
    Ok((mean, variance))
}

pub(crate) fn report_from_chains(chains: &[InducedChain], settings: &NumericSettings) -> Result<VarianceReport> {
    let moments = chains
        .iter()
        .enumerate()
        .map(|(i, c)| chain_moments(c, settings).map_err(|e| e.for_player(i)))
        .collect::<Result<Vec<_>>>()?;
    let (per_player_mean, per_player_variance): (Vec<f64>, Vec<f64>) = moments.into_iter().unzip();
    let n = per_player_mean.len() as f64;
    let team_mean = per_player_mean.iter().sum::<f64>() / n;
    let within_sum: f64 = per_player_variance.iter().sum();
    let between_sum: f64 = per_player_mean.iter().map(|m| (m - team_mean).powi(2)).sum();
    Ok(VarianceReport {
        per_player_mean,
        per_player_variance,
        team_mean,
        team_variance: within_sum + between_sum,
        within_sum,
        between_sum,
    })
}

pub(crate) fn induced_chains(game: &GameModel, policy: &DeterministicPolicy) -> Result<Vec<InducedChain>> {
    policy.validate(game)?;
    game.players
        .iter()
        .zip(&policy.actions)
        .enumerate()
        .map(|(i, (p, map))| induced_chain_for(i, p, map))
        .collect()
}

/// `(mu_i, J_i)`: long-run mean and variance of one player's reward.
pub fn player_metrics(player: &PlayerModel, policy_i: &[usize], settings: &NumericSettings) -> Result<(f64, f64)> {
    chain_moments(&induced_chain_for(0, player, policy_i)?, settings)
}

/// `J_i(y) = pi . (r - y 1)^2`.
pub fn pseudo_player_variance(player: &PlayerModel, policy_i: &[usize], y: PseudoMean, settings: &NumericSettings) -> Result<f64> {
    let chain = induced_chain_for(0, player, policy_i)?;
    let pi = stationary_distribution(&chain.transition, settings)?;
    Ok(dot(&pi, &chain.squared_deviation(y.0)))
}

pub fn team_metrics(game: &GameModel, policy: &DeterministicPolicy, settings: &NumericSettings) -> Result<VarianceReport> {
    report_from_chains(&induced_chains(game, policy)?, settings)
}

/// Exact team metrics of a per-step randomized mixture of two policies.
pub fn mixture_team_metrics(game: &GameModel, mix: &PolicyMixture, settings: &NumericSettings) -> Result<VarianceReport> {
    mix.validate(game)?;
    let chains = game
        .players
        .iter()
        .enumerate()
        .map(|(i, p)| mixed_chain_for(i, p, mix.base.player(i), mix.direction.player(i), mix.delta))
        .collect::<Result<Vec<_>>>()?;
    report_from_chains(&chains, settings)
}

/// `J(y) = sum_i J_i(y)`.
pub fn pseudo_team_variance(game: &GameModel, policy: &DeterministicPolicy, y: PseudoMean, settings: &NumericSettings) -> Result<f64> {
    policy.validate(game)?;
    game.players
        .iter()
        .enumerate()
        .map(|(i, p)| pseudo_player_variance(p, policy.player(i), y, settings).map_err(|e| e.for_player(i)))
        .sum()
}

/// Potential analysis of one player's chain under the cost `(r - y)^2`.
pub fn pseudo_cost_analysis(player: &PlayerModel, policy_i: &[usize], y: PseudoMean, settings: &NumericSettings) -> Result<ChainAnalysis> {
    let chain = induced_chain_for(0, player, policy_i)?;
    solve_poisson(&chain.transition, &chain.squared_deviation(y.0), settings)
}

/// Per-state improvement vector `(P' - P) g + (r' - y)^2 - (r - y)^2`.
fn improvement_vector(base: &InducedChain, dir: &InducedChain, potential: &[f64], y: f64) -> Vec<f64> {
    let pg = base.transition.apply(potential);
    let pg_dir = dir.transition.apply(potential);
    let c = base.squared_deviation(y);
    let c_dir = dir.squared_deviation(y);
    (0..base.n_states())
        .map(|s| (pg_dir[s] - pg[s]) + (c_dir[s] - c[s]))
        .collect()
}

fn check_analysis(player: &PlayerModel, analysis: &ChainAnalysis) -> Result<()> {
    if analysis.n_states() != player.n_states() || analysis.potential.len() != player.n_states() {
        return Err(Error::AnalysisMismatch {
            expected: player.n_states(),
            found: analysis.n_states(),
        });
    }
    Ok(())
}

/// Pseudo-variance difference `J_i^{u'}(y) - J_i^{u}(y)` through the
/// potential of `u_i`: `pi' [(P' - P) g + (r' - y)^2 - (r - y)^2]`.
///
/// `analysis_at_u` must come from [`pseudo_cost_analysis`] of `u_i` at the
/// same `y` (any additive shift of its potential gives the same value).
pub fn player_difference(
    player: &PlayerModel,
    u_i: &[usize],
    u_prime_i: &[usize],
    y: PseudoMean,
    analysis_at_u: &ChainAnalysis,
    settings: &NumericSettings,
) -> Result<f64> {
    check_analysis(player, analysis_at_u)?;
    let base = induced_chain_for(0, player, u_i)?;
    let dir = induced_chain_for(0, player, u_prime_i)?;
    let pi_new = stationary_distribution(&dir.transition, settings)?;
    Ok(dot(&pi_new, &improvement_vector(&base, &dir, &analysis_at_u.potential, y.0)))
}

/// Potential analyses of every player at `u` under the cost `(r - mu^u)^2`,
/// together with `mu^u`.
pub fn team_analyses(game: &GameModel, u: &DeterministicPolicy, settings: &NumericSettings) -> Result<(f64, Vec<ChainAnalysis>)> {
    let mu = team_metrics(game, u, settings)?.team_mean;
    let analyses = game
        .players
        .iter()
        .enumerate()
        .map(|(i, p)| pseudo_cost_analysis(p, u.player(i), PseudoMean(mu), settings).map_err(|e| e.for_player(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok((mu, analyses))
}

/// `J^{u'} - J^{u}` from potentials at `u`:
/// `sum_i pi'_i [(P'_i - P_i) g_i + (r'_i - mu)^2 - (r_i - mu)^2] - n (mu' - mu)^2`.
pub fn team_difference(game: &GameModel, u: &DeterministicPolicy, u_prime: &DeterministicPolicy, settings: &NumericSettings) -> Result<f64> {
    let (mu, analyses) = team_analyses(game, u, settings)?;
    team_difference_from_analyses(game, u, u_prime, mu, &analyses, settings)
}

pub fn team_difference_from_analyses(
    game: &GameModel,
    u: &DeterministicPolicy,
    u_prime: &DeterministicPolicy,
    mu: f64,
    analyses: &[ChainAnalysis],
    settings: &NumericSettings,
) -> Result<f64> {
    u_prime.validate(game)?;
    if analyses.len() != game.n_players() {
        return Err(Error::AnalysisMismatch {
            expected: game.n_players(),
            found: analyses.len(),
        });
    }
    let mu_prime = team_metrics(game, u_prime, settings)?.team_mean;
    let mut total = 0.0;
    for (i, p) in game.players.iter().enumerate() {
        total += player_difference(p, u.player(i), u_prime.player(i), PseudoMean(mu), &analyses[i], settings)
            .map_err(|e| e.for_player(i))?;
    }
    let n = game.n_players() as f64;
    Ok(total - n * (mu_prime - mu).powi(2))
}

/// Derivative of `J` along the per-step mixture from `u` toward `u'` at
/// zero mixing weight: `sum_i pi_i [(P'_i - P_i) g_i + (r'_i - mu)^2 - (r_i - mu)^2]`.
pub fn team_derivative(game: &GameModel, u: &DeterministicPolicy, u_prime: &DeterministicPolicy, settings: &NumericSettings) -> Result<f64> {
    let (mu, analyses) = team_analyses(game, u, settings)?;
    team_derivative_from_analyses(game, u, u_prime, mu, &analyses)
}

pub fn team_derivative_from_analyses(
    game: &GameModel,
    u: &DeterministicPolicy,
    u_prime: &DeterministicPolicy,
    mu: f64,
    analyses: &[ChainAnalysis],
) -> Result<f64> {
    u.validate(game)?;
    u_prime.validate(game)?;
    let mut total = 0.0;
    for (i, p) in game.players.iter().enumerate() {
        let analysis = &analyses[i];
        check_analysis(p, analysis)?;
        let base = induced_chain_for(i, p, u.player(i))?;
        let dir = induced_chain_for(i, p, u_prime.player(i))?;
        total += dot(&analysis.pi, &improvement_vector(&base, &dir, &analysis.potential, mu));
    }
    Ok(total)
}
