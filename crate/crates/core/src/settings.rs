//! Numeric tolerances shared by the library, the tests and the CLI.

use serde::{Deserialize, Serialize};

/// Tolerances used throughout the solver stack.
///
/// Every threshold that decides a numerical question (is this pivot zero,
/// are these two actions tied, did the objective go down) lives here so a
/// run can be reproduced from its recorded settings alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericSettings {
    /// Smallest admissible pivot magnitude in the direct linear solves.
    pub solve_tol: f64,
    /// Maximum elementwise Poisson residual accepted after a solve.
    pub residual_tol: f64,
    /// Row-sum tolerance for in-memory transition matrices.
    pub row_sum_tol: f64,
    /// Row-sum tolerance applied when loading scenario files.
    pub load_row_sum_tol: f64,
    /// Two improvement scores closer than this are treated as a tie.
    pub tie_tol: f64,
    /// Directional derivatives above this certify a strict local minimum.
    pub derivative_tol: f64,
    /// Slack allowed in the per-iteration strict-decrease check.
    pub decrease_tol: f64,
}

impl NumericSettings {
    pub const DEFAULT: NumericSettings = NumericSettings {
        solve_tol: 1e-10,
        residual_tol: 1e-9,
        row_sum_tol: 1e-12,
        load_row_sum_tol: 1e-9,
        tie_tol: 1e-9,
        derivative_tol: 1e-9,
        decrease_tol: 1e-12,
    };
}

impl Default for NumericSettings {
    fn default() -> Self {
        Self::DEFAULT
    }
}
