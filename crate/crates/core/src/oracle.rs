//! Ground truth independent of the sensitivity formulas: exhaustive joint
//! policy enumeration and seeded trajectory simulation.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::team_metrics;
use crate::model::{Choice, DeterministicPolicy, GameModel, PlayerModel, PolicyMixture};
use crate::settings::NumericSettings;

pub const DEFAULT_ENUMERATION_CAP: u64 = 100_000;
pub const BURN_IN: usize = 1_000;
pub const BATCHES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationResult {
    pub global_min_value: f64,
    pub argmin: Vec<DeterministicPolicy>,
    /// Every evaluable joint policy with its team variance, in enumeration order.
    pub table: Vec<(DeterministicPolicy, f64)>,
    pub skipped_multichain: usize,
}

impl EnumerationResult {
    pub fn value_of(&self, policy: &DeterministicPolicy) -> Option<f64> {
        self.table.iter().find(|(p, _)| p == policy).map(|(_, v)| *v)
    }
}

/// Evaluates the team variance of every stationary deterministic joint
/// policy. Multichain policies are skipped and counted.
pub fn brute_force(game: &GameModel, cap: u64, settings: &NumericSettings) -> Result<EnumerationResult> {
    let count = game.joint_policy_count();
    if count > cap as f64 {
        return Err(Error::TooLarge {
            joint_policies: count,
            cap,
        });
    }

    // odometer over every (player, state) decision
    let slots: Vec<(usize, usize)> = game
        .players
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.n_states()).map(move |s| (i, s)))
        .collect();
    let mut digits = vec![0usize; slots.len()];
    let mut table = Vec::with_capacity(count as usize);
    let mut skipped_multichain = 0;

    loop {
        let mut policy = DeterministicPolicy::lowest(game);
        for (&(i, s), &d) in slots.iter().zip(&digits) {
            policy.actions[i][s] = game.players[i].choices(s)[d].action;
        }
        match team_metrics(game, &policy, settings) {
            Ok(report) => table.push((policy, report.team_variance)),
            Err(e) if e.is_multichain() => skipped_multichain += 1,
            Err(e) => return Err(e),
        }

        let mut k = 0;
        loop {
            if k == slots.len() {
                let global_min_value = table.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
                let argmin = table
                    .iter()
                    .filter(|(_, v)| *v <= global_min_value + 1e-12)
                    .map(|(p, _)| p.clone())
                    .collect();
                return Ok(EnumerationResult {
                    global_min_value,
                    argmin,
                    table,
                    skipped_multichain,
                });
            }
            let (i, s) = slots[k];
            digits[k] += 1;
            if digits[k] < game.players[i].choices(s).len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum SimPolicy<'a> {
    Deterministic(&'a DeterministicPolicy),
    Mixture(&'a PolicyMixture),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationEstimate {
    pub horizon: usize,
    pub seed: u64,
    pub team_mean: f64,
    pub team_variance: f64,
    pub per_player_mean: Vec<f64>,
    /// Batch-means standard errors.
    pub team_mean_se: f64,
    pub team_variance_se: f64,
}

fn player_rewards(player: &PlayerModel, base: &[usize], direction: &[usize], delta: f64, horizon: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = player.n_states();
    let sampler = |c: &Choice| WeightedIndex::new(&c.next).expect("validated row");
    let base_next: Vec<_> = (0..n).map(|s| sampler(player.choice(s, base[s]).unwrap())).collect();
    let dir_next: Vec<_> = (0..n).map(|s| sampler(player.choice(s, direction[s]).unwrap())).collect();
    let base_reward: Vec<f64> = (0..n).map(|s| player.choice(s, base[s]).unwrap().reward).collect();
    let dir_reward: Vec<f64> = (0..n).map(|s| player.choice(s, direction[s]).unwrap().reward).collect();

    let mut s = rng.random_range(0..n);
    let mut out = Vec::with_capacity(horizon);
    for t in 0..BURN_IN + horizon {
        // the mixing draw is consumed even when delta is 0 so that a
        // degenerate mixture replays the base trajectory exactly
        let use_dir = rng.random::<f64>() < delta;
        let (r, next) = if use_dir {
            (dir_reward[s], &dir_next[s])
        } else {
            (base_reward[s], &base_next[s])
        };
        if t >= BURN_IN {
            out.push(r);
        }
        s = next.sample(rng);
    }
    out
}

/// Seeded simulation of every player for `horizon` steps after a burn-in,
/// starting from a uniformly drawn state. Player `i` uses stream `i` of the
/// seed's generator.
pub fn simulate(game: &GameModel, policy: SimPolicy<'_>, horizon: usize, seed: u64) -> Result<SimulationEstimate> {
    if horizon == 0 {
        return Err(Error::PolicyShape("simulation horizon must be at least 1".into()));
    }
    let (base, direction, delta) = match policy {
        SimPolicy::Deterministic(p) => {
            p.validate(game)?;
            (p, p, 0.0)
        }
        SimPolicy::Mixture(m) => {
            m.validate(game)?;
            (&m.base, &m.direction, m.delta)
        }
    };

    let rewards: Vec<Vec<f64>> = game
        .players
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            player_rewards(p, base.player(i), direction.player(i), delta, horizon, &mut rng)
        })
        .collect();

    let n = game.n_players() as f64;
    let t = horizon as f64;
    let per_player_mean: Vec<f64> = rewards.iter().map(|r| r.iter().sum::<f64>() / t).collect();
    let team_mean = per_player_mean.iter().sum::<f64>() / n;
    let team_variance: f64 = rewards
        .iter()
        .map(|r| r.iter().map(|x| (x - team_mean).powi(2)).sum::<f64>() / t)
        .sum();

    let batches = BATCHES.min(horizon);
    let size = horizon / batches;
    let (mut mean_b, mut var_b) = (Vec::with_capacity(batches), Vec::with_capacity(batches));
    for b in 0..batches {
        let lo = b * size;
        let hi = if b + 1 == batches { horizon } else { lo + size };
        let len = (hi - lo) as f64;
        mean_b.push(rewards.iter().map(|r| r[lo..hi].iter().sum::<f64>() / len).sum::<f64>() / n);
        var_b.push(
            rewards
                .iter()
                .map(|r| r[lo..hi].iter().map(|x| (x - team_mean).powi(2)).sum::<f64>() / len)
                .sum::<f64>(),
        );
    }

    Ok(SimulationEstimate {
        horizon,
        seed,
        team_mean,
        team_variance,
        per_player_mean,
        team_mean_se: standard_error(&mean_b),
        team_variance_se: standard_error(&var_b),
    })
}

fn standard_error(xs: &[f64]) -> f64 {
    let k = xs.len();
    if k < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / k as f64;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64;
    (var / k as f64).sqrt()
}

/// Random game for property tests and cross-checks.
///
/// Every transition row puts positive mass on state 0, so every stationary
/// policy (deterministic or mixed) is unichain; other entries are zero with
/// probability one half, which leaves room for transient states.
pub fn random_game<R: Rng + ?Sized>(rng: &mut R, max_players: usize, max_states: usize, max_actions: usize) -> GameModel {
    generate(rng, max_players, max_states, max_actions, 0.5)
}

/// Like [`random_game`] but every transition probability is positive, so
/// every state is recurrent under every policy.
pub fn random_ergodic_game<R: Rng + ?Sized>(rng: &mut R, max_players: usize, max_states: usize, max_actions: usize) -> GameModel {
    generate(rng, max_players, max_states, max_actions, 1.0)
}

fn generate<R: Rng + ?Sized>(rng: &mut R, max_players: usize, max_states: usize, max_actions: usize, density: f64) -> GameModel {
    let n_players = rng.random_range(1..=max_players);
    let players = (0..n_players)
        .map(|i| {
            let n = rng.random_range(1..=max_states);
            let choices = (0..n)
                .map(|_| {
                    let k = rng.random_range(1..=max_actions);
                    (0..k)
                        .map(|a| {
                            let mut next: Vec<f64> = (0..n)
                                .map(|t| {
                                    if t == 0 || rng.random_bool(density) {
                                        rng.random_range(0.05..1.0)
                                    } else {
                                        0.0
                                    }
                                })
                                .collect();
                            let sum: f64 = next.iter().sum();
                            next.iter_mut().for_each(|p| *p /= sum);
                            Choice {
                                action: a,
                                reward: rng.random_range(-3.0..3.0),
                                next,
                            }
                        })
                        .collect()
                })
                .collect();
            PlayerModel::new(
                format!("player{i}"),
                (0..n).map(|s| format!("s{s}")).collect(),
                (0..max_actions).map(|a| format!("a{a}")).collect(),
                choices,
                1e-12,
            )
            .expect("generated model is valid")
        })
        .collect();
    GameModel::new(players).expect("at least one player")
}
