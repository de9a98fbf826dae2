//! Games with separately controlled chains and their stationary policies.
//!
//! Each player owns a finite state space, a per-state admissible action set
//! and a transition/reward table indexed only by its own `(state, action)`.
//! Nothing in a [`PlayerModel`] can refer to another player.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{check_row, TransitionMatrix};
use crate::error::{Error, Result};

/// One admissible `(state, action)` pair of a player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    /// Index into the player's action label table.
    pub action: usize,
    pub reward: f64,
    /// Next-state distribution `p(. | s, a)`.
    pub next: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerModel {
    pub name: String,
    pub state_labels: Vec<String>,
    pub action_labels: Vec<String>,
    /// `choices[s]` lists the admissible actions of state `s`, sorted by action id.
    choices: Vec<Vec<Choice>>,
}

impl PlayerModel {
    pub fn new(
        name: impl Into<String>,
        state_labels: Vec<String>,
        action_labels: Vec<String>,
        mut choices: Vec<Vec<Choice>>,
        row_sum_tol: f64,
    ) -> Result<Self> {
        let name = name.into();
        let n = state_labels.len();
        let bad = |msg: String| Error::InvalidModel(format!("player {name:?}: {msg}"));
        if n == 0 {
            return Err(bad("no states".into()));
        }
        if choices.len() != n {
            return Err(bad(format!("{} choice lists for {n} states", choices.len())));
        }
        for (s, list) in choices.iter_mut().enumerate() {
            if list.is_empty() {
                return Err(bad(format!("state {s} has no admissible action")));
            }
            list.sort_by_key(|c| c.action);
            for pair in list.windows(2) {
                if pair[0].action == pair[1].action {
                    return Err(bad(format!("state {s} lists action {} twice", pair[0].action)));
                }
            }
            for c in list.iter() {
                if c.action >= action_labels.len() {
                    return Err(bad(format!("state {s}: unknown action id {}", c.action)));
                }
                if !c.reward.is_finite() {
                    return Err(bad(format!("state {s}, action {}: non-finite reward", c.action)));
                }
                check_row(&c.next, n, row_sum_tol)
                    .map_err(|m| bad(format!("state {s}, action {}: transition row {m}", c.action)))?;
            }
        }
        Ok(Self {
            name,
            state_labels,
            action_labels,
            choices,
        })
    }

    pub fn n_states(&self) -> usize {
        self.state_labels.len()
    }

    pub fn choices(&self, s: usize) -> &[Choice] {
        &self.choices[s]
    }

    pub fn admissible(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.choices[s].iter().map(|c| c.action)
    }

    pub fn choice(&self, s: usize, action: usize) -> Option<&Choice> {
        self.choices[s]
            .binary_search_by_key(&action, |c| c.action)
            .ok()
            .map(|k| &self.choices[s][k])
    }

    pub fn is_admissible(&self, s: usize, action: usize) -> bool {
        self.choice(s, action).is_some()
    }

    /// Number of stationary deterministic policies of this player.
    pub fn policy_count(&self) -> f64 {
        self.choices.iter().map(|c| c.len() as f64).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameModel {
    pub players: Vec<PlayerModel>,
}

impl GameModel {
    pub fn new(players: Vec<PlayerModel>) -> Result<Self> {
        if players.is_empty() {
            return Err(Error::InvalidModel("a game needs at least one player".into()));
        }
        Ok(Self { players })
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    /// Size of the joint stationary deterministic policy space.
    pub fn joint_policy_count(&self) -> f64 {
        self.players.iter().map(PlayerModel::policy_count).product()
    }
}

/// Stationary deterministic joint policy: `actions[i][s]` is player `i`'s
/// action id in state `s`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    pub actions: Vec<Vec<usize>>,
}

impl DeterministicPolicy {
    pub fn new(actions: Vec<Vec<usize>>) -> Self {
        Self { actions }
    }

    pub fn player(&self, i: usize) -> &[usize] {
        &self.actions[i]
    }

    pub fn validate(&self, game: &GameModel) -> Result<()> {
        if self.actions.len() != game.n_players() {
            return Err(Error::PolicyShape(format!(
                "policy covers {} players, game has {}",
                self.actions.len(),
                game.n_players()
            )));
        }
        for (i, (map, player)) in self.actions.iter().zip(&game.players).enumerate() {
            validate_action_map(i, player, map)?;
        }
        Ok(())
    }

    /// Uniform random admissible action, independently per `(player, state)`.
    pub fn random<R: Rng + ?Sized>(game: &GameModel, rng: &mut R) -> Self {
        let actions = game
            .players
            .iter()
            .map(|p| {
                (0..p.n_states())
                    .map(|s| {
                        let list = p.choices(s);
                        list[rng.random_range(0..list.len())].action
                    })
                    .collect()
            })
            .collect();
        Self { actions }
    }

    /// First admissible action everywhere.
    pub fn lowest(game: &GameModel) -> Self {
        let actions = game
            .players
            .iter()
            .map(|p| (0..p.n_states()).map(|s| p.choices(s)[0].action).collect())
            .collect();
        Self { actions }
    }

    /// Number of `(player, state)` decisions that differ from `other`.
    pub fn changed_decisions(&self, other: &Self) -> usize {
        self.actions
            .iter()
            .zip(&other.actions)
            .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count())
            .sum()
    }
}

pub(crate) fn validate_action_map(i: usize, player: &PlayerModel, map: &[usize]) -> Result<()> {
    if map.len() != player.n_states() {
        return Err(Error::PolicyShape(format!(
            "player {i}: action map has {} entries for {} states",
            map.len(),
            player.n_states()
        )));
    }
    for (s, &a) in map.iter().enumerate() {
        if !player.is_admissible(s, a) {
            return Err(Error::InadmissibleAction {
                player: i,
                state: s,
                action: a,
            });
        }
    }
    Ok(())
}

/// Per-step randomization between two deterministic policies: in every
/// step each player uses `direction` with probability `delta`, `base`
/// otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMixture {
    pub base: DeterministicPolicy,
    pub direction: DeterministicPolicy,
    pub delta: f64,
}

impl PolicyMixture {
    pub fn new(base: DeterministicPolicy, direction: DeterministicPolicy, delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::PolicyShape(format!("mixing weight {delta} outside [0, 1]")));
        }
        Ok(Self { base, direction, delta })
    }

    pub fn validate(&self, game: &GameModel) -> Result<()> {
        self.base.validate(game)?;
        self.direction.validate(game)
    }
}

/// The Markov chain a stationary (possibly randomized) policy induces on one
/// player, with the reward lottery of every state.
///
/// `branches[s]` holds `(weight, reward)` pairs; any per-state function of
/// the reward (the mean, a squared deviation) is blended with those weights.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedChain {
    pub transition: TransitionMatrix,
    pub branches: Vec<Vec<(f64, f64)>>,
}

impl InducedChain {
    pub fn n_states(&self) -> usize {
        self.transition.n_states()
    }

    /// Expected one-step reward per state.
    pub fn mean_rewards(&self) -> Vec<f64> {
        self.branches
            .iter()
            .map(|b| b.iter().map(|(w, r)| w * r).sum())
            .collect()
    }

    /// Expected one-step squared deviation `E[(r - y)^2]` per state.
    pub fn squared_deviation(&self, y: f64) -> Vec<f64> {
        self.branches
            .iter()
            .map(|b| b.iter().map(|(w, r)| w * (r - y) * (r - y)).sum())
            .collect()
    }
}

/// `(P^{u_i}, r^{u_i})` for one player's deterministic action map.
pub fn induced_chain(player: &PlayerModel, policy_i: &[usize]) -> Result<(TransitionMatrix, Vec<f64>)> {
    let chain = induced_chain_for(usize::MAX, player, policy_i)?;
    let rewards = chain.mean_rewards();
    Ok((chain.transition, rewards))
}

pub(crate) fn induced_chain_for(i: usize, player: &PlayerModel, policy_i: &[usize]) -> Result<InducedChain> {
    validate_action_map(i, player, policy_i)?;
    let n = player.n_states();
    let mut data = Vec::with_capacity(n * n);
    let mut branches = Vec::with_capacity(n);
    for (s, &a) in policy_i.iter().enumerate() {
        let c = player.choice(s, a).expect("validated");
        data.extend_from_slice(&c.next);
        branches.push(vec![(1.0, c.reward)]);
    }
    Ok(InducedChain {
        transition: TransitionMatrix::from_trusted_rows(n, data),
        branches,
    })
}

/// Chain of a player under per-step mixing of `base_i` (weight `1 - delta`)
/// and `direction_i` (weight `delta`). Transition rows blend affinely; the
/// branches carry both rewards so every cost blends with the same weights.
pub fn induced_mixed_chain(
    player: &PlayerModel,
    base_i: &[usize],
    direction_i: &[usize],
    delta: f64,
) -> Result<InducedChain> {
    mixed_chain_for(usize::MAX, player, base_i, direction_i, delta)
}

pub(crate) fn mixed_chain_for(
    i: usize,
    player: &PlayerModel,
    base_i: &[usize],
    direction_i: &[usize],
    delta: f64,
) -> Result<InducedChain> {
    validate_action_map(i, player, base_i)?;
    validate_action_map(i, player, direction_i)?;
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::PolicyShape(format!("mixing weight {delta} outside [0, 1]")));
    }
    let keep = 1.0 - delta;
    let n = player.n_states();
    let mut data = Vec::with_capacity(n * n);
    let mut branches = Vec::with_capacity(n);
    for s in 0..n {
        let b = player.choice(s, base_i[s]).expect("validated");
        let d = player.choice(s, direction_i[s]).expect("validated");
        data.extend(b.next.iter().zip(&d.next).map(|(pb, pd)| keep * pb + delta * pd));
        branches.push(vec![(keep, b.reward), (delta, d.reward)]);
    }
    Ok(InducedChain {
        transition: TransitionMatrix::from_trusted_rows(n, data),
        branches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn one_state(rewards: &[f64]) -> PlayerModel {
        let choices = vec![rewards
            .iter()
            .enumerate()
            .map(|(a, &r)| Choice {
                action: a,
                reward: r,
                next: vec![1.0],
            })
            .collect()];
        let labels = (0..rewards.len()).map(|a| a.to_string()).collect();
        PlayerModel::new("p", vec!["s".into()], labels, choices, 1e-12).unwrap()
    }

    fn stay_or_flip() -> PlayerModel {
        let c = |action, next: [f64; 2], reward| Choice {
            action,
            reward,
            next: next.to_vec(),
        };
        PlayerModel::new(
            "two",
            vec!["a".into(), "b".into()],
            vec!["stay".into(), "flip".into()],
            vec![
                vec![c(0, [1.0, 0.0], 0.0), c(1, [0.0, 1.0], 1.0)],
                vec![c(0, [0.0, 1.0], 2.0), c(1, [1.0, 0.0], 3.0)],
            ],
            1e-12,
        )
        .unwrap()
    }

    #[test]
    fn single_state_self_loop() {
        let p = one_state(&[5.0]);
        let (m, r) = induced_chain(&p, &[0]).unwrap();
        assert_eq!(m.row(0), &[1.0]);
        assert_eq!(r, vec![5.0]);
    }

    #[test]
    fn stay_everywhere_is_identity() {
        let (m, r) = induced_chain(&stay_or_flip(), &[0, 0]).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 1.0]);
        assert_eq!(r, vec![0.0, 2.0]);
    }

    #[test]
    fn inadmissible_action_is_rejected() {
        let err = induced_chain(&one_state(&[1.0, 2.0]), &[2]).unwrap_err();
        assert!(matches!(err, Error::InadmissibleAction { state: 0, action: 2, .. }));
    }

    #[test]
    fn model_validation() {
        let bad_row = vec![vec![Choice {
            action: 0,
            reward: 0.0,
            next: vec![0.5],
        }]];
        assert!(PlayerModel::new("x", vec!["s".into()], vec!["a".into()], bad_row, 1e-12).is_err());
        assert!(PlayerModel::new("x", vec!["s".into()], vec!["a".into()], vec![vec![]], 1e-12).is_err());
        let nan = vec![vec![Choice {
            action: 0,
            reward: f64::NAN,
            next: vec![1.0],
        }]];
        assert!(PlayerModel::new("x", vec!["s".into()], vec!["a".into()], nan, 1e-12).is_err());
        assert!(GameModel::new(vec![]).is_err());
    }

    #[test]
    fn mixture_endpoints_and_midpoint() {
        let p = stay_or_flip();
        let base = [0, 0];
        let dir = [1, 1];
        let m0 = induced_mixed_chain(&p, &base, &dir, 0.0).unwrap();
        let (pb, rb) = induced_chain(&p, &base).unwrap();
        assert_eq!(m0.transition, pb);
        assert_eq!(m0.mean_rewards(), rb);

        let m1 = induced_mixed_chain(&p, &base, &dir, 1.0).unwrap();
        let (pd, rd) = induced_chain(&p, &dir).unwrap();
        assert_eq!(m1.transition, pd);
        assert_eq!(m1.mean_rewards(), rd);

        let half = induced_mixed_chain(&p, &base, &dir, 0.5).unwrap();
        assert_eq!(half.transition.row(0), &[0.5, 0.5]);
        assert_eq!(half.squared_deviation(0.0), vec![0.5, 0.5 * 4.0 + 0.5 * 9.0]);
    }

    #[test]
    fn mixture_is_affine_in_delta() {
        let p = stay_or_flip();
        let (base, dir) = ([0, 1], [1, 0]);
        let c0 = induced_mixed_chain(&p, &base, &dir, 0.0).unwrap();
        let c1 = induced_mixed_chain(&p, &base, &dir, 1.0).unwrap();
        for delta in [0.0, 0.25, 1.0] {
            let cd = induced_mixed_chain(&p, &base, &dir, delta).unwrap();
            for s in 0..2 {
                for t in 0..2 {
                    let affine = (1.0 - delta) * c0.transition.get(s, t) + delta * c1.transition.get(s, t);
                    assert_eq!(cd.transition.get(s, t), affine);
                }
            }
        }
        assert!(induced_mixed_chain(&p, &base, &dir, 1.5).is_err());
    }

    #[test]
    fn random_policies_are_admissible() {
        use rand::SeedableRng;
        let game = GameModel::new(vec![stay_or_flip(), one_state(&[1.0, 2.0, 3.0])]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            DeterministicPolicy::random(&game, &mut rng).validate(&game).unwrap();
        }
        assert_eq!(game.joint_policy_count(), 12.0);
    }
}
