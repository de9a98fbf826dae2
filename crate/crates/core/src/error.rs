use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("chain has {closed_classes} closed classes{}", describe_site(*.player, *.iteration))]
    Multichain {
        closed_classes: usize,
        player: Option<usize>,
        iteration: Option<usize>,
    },

    #[error("linear system is numerically singular (pivot magnitude {pivot:e})")]
    Singular { pivot: f64 },

    #[error("Poisson residual {residual:e} exceeds tolerance")]
    Residual { residual: f64 },

    #[error("player {player}: action {action} is not admissible in state {state}")]
    InadmissibleAction {
        player: usize,
        state: usize,
        action: usize,
    },

    #[error("policy shape mismatch: {0}")]
    PolicyShape(String),

    #[error("chain analysis has {found} states, player has {expected}")]
    AnalysisMismatch { expected: usize, found: usize },

    #[error(
        "improvement at iteration {iteration} made player {player} multichain (changed states {changed_states:?})"
    )]
    ImprovementMultichain {
        iteration: usize,
        player: usize,
        changed_states: Vec<usize>,
    },

    #[error("team variance did not decrease at iteration {iteration}: {previous} -> {current}")]
    NotDecreasing {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("no fixed point within {max_iters} iterations")]
    MaxIters { max_iters: usize },

    #[error("{joint_policies} joint policies exceed the enumeration cap {cap}")]
    TooLarge { joint_policies: f64, cap: u64 },

    #[error("scenario parse error: {0}")]
    ScenarioParse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

fn describe_site(player: Option<usize>, iteration: Option<usize>) -> String {
    match (player, iteration) {
        (Some(p), Some(l)) => format!(" (player {p}, iteration {l})"),
        (Some(p), None) => format!(" (player {p})"),
        (None, Some(l)) => format!(" (iteration {l})"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub fn is_multichain(&self) -> bool {
        matches!(
            self,
            Error::Multichain { .. } | Error::ImprovementMultichain { .. }
        )
    }

    /// Attach the offending player to a multichain error; other errors pass through.
    pub(crate) fn for_player(self, who: usize) -> Self {
        match self {
            Error::Multichain {
                closed_classes,
                iteration,
                ..
            } => Error::Multichain {
                closed_classes,
                player: Some(who),
                iteration,
            },
            other => other,
        }
    }

    pub(crate) fn at_iteration(self, l: usize) -> Self {
        match self {
            Error::Multichain {
                closed_classes,
                player,
                ..
            } => Error::Multichain {
                closed_classes,
                player,
                iteration: Some(l),
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
