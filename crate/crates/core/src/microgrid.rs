//! Three-microgrid energy-management benchmark.
//!
//! Each microgrid owns a wind turbine whose output level follows its own
//! Markov chain and a battery it (dis)charges by an integer power `a`
//! (positive discharges). Its state is `(G, B)`; the battery moves
//! deterministically to `B - a` and the reward is the power exchanged with
//! the main grid, `min(G + a - D, sell_cap)`.

use serde::{Deserialize, Serialize};

use crate::chain::TransitionMatrix;
use crate::error::{Error, Result};
use crate::model::{Choice, GameModel, PlayerModel};

/// Wind-level transition matrix of microgrid 1.
pub const WIND_1: [[f64; 6]; 6] = [
    [0.53, 0.18, 0.19, 0.04, 0.01, 0.05],
    [0.51, 0.08, 0.20, 0.08, 0.02, 0.11],
    [0.35, 0.11, 0.19, 0.11, 0.03, 0.21],
    [0.27, 0.15, 0.15, 0.14, 0.03, 0.26],
    [0.14, 0.11, 0.13, 0.15, 0.05, 0.42],
    [0.09, 0.03, 0.06, 0.06, 0.03, 0.73],
];

/// Microgrid 2: stronger wind profile.
pub const WIND_2: [[f64; 6]; 6] = [
    [0.33, 0.18, 0.19, 0.04, 0.01, 0.25],
    [0.31, 0.08, 0.20, 0.08, 0.02, 0.31],
    [0.15, 0.11, 0.19, 0.11, 0.03, 0.41],
    [0.17, 0.15, 0.15, 0.14, 0.03, 0.36],
    [0.04, 0.11, 0.13, 0.15, 0.05, 0.52],
    [0.07, 0.03, 0.06, 0.06, 0.03, 0.75],
];

/// Microgrid 3: weaker wind profile.
pub const WIND_3: [[f64; 6]; 6] = [
    [0.53, 0.18, 0.19, 0.04, 0.01, 0.05],
    [0.51, 0.08, 0.20, 0.08, 0.02, 0.11],
    [0.45, 0.11, 0.19, 0.11, 0.03, 0.11],
    [0.37, 0.15, 0.15, 0.14, 0.03, 0.16],
    [0.34, 0.11, 0.13, 0.15, 0.05, 0.22],
    [0.49, 0.03, 0.06, 0.06, 0.03, 0.33],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrogridParams {
    /// Battery capacity (MWh); battery levels are `0..=battery_max`.
    pub battery_max: i64,
    /// Most negative action (maximum charging power, MW).
    pub charge_min: i64,
    /// Largest action (maximum discharging power, MW).
    pub discharge_max: i64,
    /// Wind output (MW) of each wind level.
    pub wind_levels: Vec<f64>,
    /// One wind chain per microgrid.
    pub wind_matrices: Vec<TransitionMatrix>,
    /// Constant demand (MW) per microgrid.
    pub demand: Vec<f64>,
    /// Largest power a microgrid may sell to the main grid (MW).
    pub sell_cap: f64,
}

impl Default for MicrogridParams {
    fn default() -> Self {
        let wind = |m: &[[f64; 6]; 6]| TransitionMatrix::new(m.iter().map(|r| r.to_vec()).collect(), 1e-12).expect("embedded wind matrix");
        Self {
            battery_max: 5,
            charge_min: -2,
            discharge_max: 2,
            wind_levels: (0..6).map(f64::from).collect(),
            wind_matrices: vec![wind(&WIND_1), wind(&WIND_2), wind(&WIND_3)],
            demand: vec![2.0, 2.5, 2.0],
            sell_cap: 2.0,
        }
    }
}

/// `(G, B)` as indices into the wind and battery level grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicrogridState {
    pub wind: usize,
    pub battery: usize,
}

impl MicrogridParams {
    pub fn n_microgrids(&self) -> usize {
        self.demand.len()
    }

    pub fn n_battery_levels(&self) -> usize {
        self.battery_max as usize + 1
    }

    pub fn n_states(&self) -> usize {
        self.wind_levels.len() * self.n_battery_levels()
    }

    pub fn state_index(&self, state: MicrogridState) -> usize {
        state.wind * self.n_battery_levels() + state.battery
    }

    pub fn state_of(&self, index: usize) -> MicrogridState {
        MicrogridState {
            wind: index / self.n_battery_levels(),
            battery: index % self.n_battery_levels(),
        }
    }

    /// Action values in label order; action id `k` means power `charge_min + k`.
    pub fn action_values(&self) -> Vec<i64> {
        (self.charge_min..=self.discharge_max).collect()
    }

    pub fn action_id(&self, power: i64) -> Option<usize> {
        (self.charge_min..=self.discharge_max)
            .contains(&power)
            .then(|| (power - self.charge_min) as usize)
    }

    /// Feasible powers at battery level `b`: `max(C_min, B - B_max) <= a <= min(C_max, B)`.
    pub fn admissible_powers(&self, battery: i64) -> impl Iterator<Item = i64> {
        let lo = self.charge_min.max(battery - self.battery_max);
        let hi = self.discharge_max.min(battery);
        lo..=hi
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidModel(format!("microgrid parameters: {m}")));
        if self.battery_max <= 0 {
            return bad("battery capacity must be positive");
        }
        if !(self.charge_min <= 0 && 0 <= self.discharge_max) {
            return bad("need charge_min <= 0 <= discharge_max");
        }
        if self.demand.is_empty() {
            return bad("no microgrids");
        }
        if self.wind_matrices.len() != self.demand.len() {
            return bad("one wind matrix per microgrid required");
        }
        if self.wind_levels.is_empty() || self.wind_matrices.iter().any(|m| m.n_states() != self.wind_levels.len()) {
            return bad("wind matrices must match the wind level grid");
        }
        if self.wind_levels.iter().chain(&self.demand).any(|v| !v.is_finite()) || !self.sell_cap.is_finite() {
            return bad("non-finite level, demand or cap");
        }
        Ok(())
    }
}

/// Builds the microgrid game. State `(G, B)` has index `G * (B_max + 1) + B`.
pub fn build_microgrid(params: &MicrogridParams) -> Result<GameModel> {
    params.validate()?;
    let n_b = params.n_battery_levels();
    let n = params.n_states();
    let action_labels: Vec<String> = params.action_values().iter().map(|a| a.to_string()).collect();
    let state_labels: Vec<String> = (0..n)
        .map(|k| {
            let st = params.state_of(k);
            format!("G{}B{}", st.wind, st.battery)
        })
        .collect();

    let players = (0..params.n_microgrids())
        .map(|i| {
            let wind = &params.wind_matrices[i];
            let choices = (0..n)
                .map(|k| {
                    let st = params.state_of(k);
                    let g = params.wind_levels[st.wind];
                    let b = st.battery as i64;
                    params
                        .admissible_powers(b)
                        .map(|a| {
                            let next_b = (b - a) as usize;
                            let mut next = vec![0.0; n];
                            for (w, &p) in wind.row(st.wind).iter().enumerate() {
                                next[w * n_b + next_b] = p;
                            }
                            Choice {
                                action: params.action_id(a).expect("in range"),
                                reward: (g + a as f64 - params.demand[i]).min(params.sell_cap),
                                next,
                            }
                        })
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>();
            PlayerModel::new(format!("microgrid{}", i + 1), state_labels.clone(), action_labels.clone(), choices, 1e-12)
        })
        .collect::<Result<Vec<_>>>()?;
    GameModel::new(players)
}

/// The benchmark with default parameters.
pub fn default_microgrid() -> GameModel {
    build_microgrid(&MicrogridParams::default()).expect("default parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn powers(game: &GameModel, player: usize, params: &MicrogridParams, st: MicrogridState) -> Vec<i64> {
        game.players[player]
            .admissible(params.state_index(st))
            .map(|a| params.action_values()[a])
            .collect()
    }

    #[test]
    fn shapes_under_defaults() {
        let params = MicrogridParams::default();
        let game = default_microgrid();
        assert_eq!(game.n_players(), 3);
        for p in &game.players {
            assert_eq!(p.n_states(), 36);
            let pairs: usize = (0..36).map(|s| p.choices(s).len()).sum();
            assert!(pairs <= 180);
            for s in 0..36 {
                assert!(p.is_admissible(s, params.action_id(0).unwrap()));
                for c in p.choices(s) {
                    assert!(c.reward >= -4.5 && c.reward <= 2.0);
                }
            }
        }
    }

    #[test]
    fn empty_and_full_battery_constraints() {
        let params = MicrogridParams::default();
        let game = default_microgrid();
        assert_eq!(powers(&game, 0, &params, MicrogridState { wind: 0, battery: 0 }), vec![-2, -1, 0]);
        let full = MicrogridState { wind: 5, battery: 5 };
        assert_eq!(powers(&game, 0, &params, full), vec![0, 1, 2]);
        let c = game.players[0].choice(params.state_index(full), params.action_id(0).unwrap()).unwrap();
        assert_eq!(c.reward, 2.0);
    }

    #[test]
    fn transition_and_reward_of_sample_states() {
        let params = MicrogridParams::default();
        let game = default_microgrid();
        let from = params.state_index(MicrogridState { wind: 2, battery: 3 });
        let a = params.action_id(1).unwrap();

        let c = game.players[0].choice(from, a).unwrap();
        assert_eq!(c.reward, 1.0);
        let c = game.players[1].choice(from, a).unwrap();
        assert_eq!(c.reward, 0.5);
        for w in 0..6 {
            for b in 0..6 {
                let expected = if b == 2 { WIND_2[2][w] } else { 0.0 };
                assert_eq!(c.next[params.state_index(MicrogridState { wind: w, battery: b })], expected);
            }
        }
    }

    #[test]
    fn embedded_wind_rows_sum_to_one() {
        for m in [WIND_1, WIND_2, WIND_3] {
            for row in m {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_params_are_rejected() {
        let mut p = MicrogridParams::default();
        p.demand.pop();
        assert!(build_microgrid(&p).is_err());
        let p = MicrogridParams {
            charge_min: 1,
            ..MicrogridParams::default()
        };
        assert!(build_microgrid(&p).is_err());
    }
}
