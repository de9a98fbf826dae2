//! JSON scenario files.
//!
//! ```json
//! {
//!   "format": "teamvar-scenario/1",
//!   "players": [
//!     {
//!       "name": "microgrid1",
//!       "state_labels": ["G0B0", "G0B1"],
//!       "action_labels": ["-1", "0", "1"],
//!       "states": [
//!         { "choices": [ { "action": 1, "reward": -2.0, "next": [1.0, 0.0] } ] },
//!         { "choices": [ { "action": 2, "reward": -1.0, "next": [0.3, 0.7] } ] }
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! `action` indexes `action_labels`; `next` is the full next-state
//! distribution over the player's states. Rows must sum to one within the
//! load tolerance; rows inside that tolerance but off by more than the
//! in-memory tolerance are rescaled.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Choice, GameModel, PlayerModel};
use crate::settings::NumericSettings;

pub const FORMAT: &str = "teamvar-scenario/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub format: String,
    pub players: Vec<PlayerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerEntry {
    pub name: String,
    pub state_labels: Vec<String>,
    pub action_labels: Vec<String>,
    pub states: Vec<StateEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEntry {
    pub choices: Vec<Choice>,
}

impl ScenarioFile {
    pub fn from_game(game: &GameModel) -> Self {
        let players = game
            .players
            .iter()
            .map(|p| PlayerEntry {
                name: p.name.clone(),
                state_labels: p.state_labels.clone(),
                action_labels: p.action_labels.clone(),
                states: (0..p.n_states())
                    .map(|s| StateEntry {
                        choices: p.choices(s).to_vec(),
                    })
                    .collect(),
            })
            .collect();
        Self {
            format: FORMAT.into(),
            players,
        }
    }

    pub fn into_game(self, settings: &NumericSettings) -> Result<GameModel> {
        if self.format != FORMAT {
            return Err(Error::ScenarioParse(format!("unsupported format {:?}, expected {FORMAT:?}", self.format)));
        }
        if self.players.is_empty() {
            return Err(Error::ScenarioParse("scenario lists no players".into()));
        }
        let players = self
            .players
            .into_iter()
            .enumerate()
            .map(|(i, entry)| player_from_entry(i, entry, settings))
            .collect::<Result<Vec<_>>>()?;
        GameModel::new(players)
    }
}

fn player_from_entry(i: usize, entry: PlayerEntry, settings: &NumericSettings) -> Result<PlayerModel> {
    let who = format!("player {i} ({:?})", entry.name);
    let n = entry.state_labels.len();
    if entry.states.len() != n {
        return Err(Error::ScenarioParse(format!(
            "{who}: {} state entries for {n} state labels",
            entry.states.len()
        )));
    }
    let mut choices = Vec::with_capacity(n);
    for (s, state) in entry.states.into_iter().enumerate() {
        let at = format!("{who}, state {s} ({:?})", entry.state_labels[s]);
        if state.choices.is_empty() {
            return Err(Error::ScenarioParse(format!("{at}: no admissible actions")));
        }
        let mut list = Vec::with_capacity(state.choices.len());
        for mut c in state.choices {
            let label = entry
                .action_labels
                .get(c.action)
                .ok_or_else(|| Error::ScenarioParse(format!("{at}: unknown action id {}", c.action)))?;
            let at = format!("{at}, action {:?}", label);
            if c.next.len() != n {
                return Err(Error::ScenarioParse(format!("{at}: transition row has {} entries, expected {n}", c.next.len())));
            }
            if let Some(p) = c.next.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::ScenarioParse(format!("{at}: probability {p} outside [0, 1]")));
            }
            let sum: f64 = c.next.iter().sum();
            if !((sum - 1.0).abs() <= settings.load_row_sum_tol) {
                return Err(Error::ScenarioParse(format!("{at}: transition row sums to {sum}")));
            }
            if (sum - 1.0).abs() > settings.row_sum_tol {
                c.next.iter_mut().for_each(|p| *p /= sum);
            }
            if !c.reward.is_finite() {
                return Err(Error::ScenarioParse(format!("{at}: reward is not finite")));
            }
            list.push(c);
        }
        choices.push(list);
    }
    PlayerModel::new(entry.name, entry.state_labels, entry.action_labels, choices, settings.row_sum_tol)
        .map_err(|e| Error::ScenarioParse(e.to_string()))
}

pub fn parse_scenario(text: &str, settings: &NumericSettings) -> Result<GameModel> {
    let file: ScenarioFile = serde_json::from_str(text)
        .map_err(|e| Error::ScenarioParse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    file.into_game(settings)
}

pub fn load_scenario(path: &Path, settings: &NumericSettings) -> Result<GameModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text, settings)
}

pub fn scenario_to_json(game: &GameModel) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_game(game)).expect("scenario serializes")
}
