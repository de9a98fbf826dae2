//! Team-variance minimization for stochastic games whose players control
//! separate Markov chains.
//!
//! The crate evaluates long-run team mean and team variance exactly from
//! stationary distributions, provides the difference and derivative
//! formulas of the team variance with respect to policy changes, and runs
//! decentralized policy iteration coordinated by the team mean. The
//! [`oracle`] module holds brute-force and simulation cross-checks and
//! [`microgrid`] the energy-management benchmark.

pub mod chain;
pub mod error;
pub mod metrics;
pub mod microgrid;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod settings;

pub use chain::{classify_chain, solve_poisson, stationary_distribution, ChainAnalysis, ChainClass, TransitionMatrix};
pub use error::{Error, Result};
pub use metrics::{
    mixture_team_metrics, player_difference, player_metrics, pseudo_player_variance, pseudo_team_variance, team_derivative,
    team_difference, team_metrics, PseudoMean, VarianceReport,
};
pub use model::{induced_chain, induced_mixed_chain, Choice, DeterministicPolicy, GameModel, InducedChain, PlayerModel, PolicyMixture};
pub use optimizer::{
    check_necessary_condition, improve_player, multistart, run_algorithm1, AlgorithmRun, Classification, ConvergenceCertificate,
    IterationRecord, MultistartResult,
};
pub use settings::NumericSettings;
