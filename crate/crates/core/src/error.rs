use thiserror::Error;

/// Errors produced by the simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rank zero feature matrix")]
    RankZero,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible matching: {0}")]
    InfeasibleMatching(String),

    #[error("MLE did not converge within {iterations} iterations (final gradient norm {grad_norm:e})")]
    MleNotConverged { iterations: usize, grad_norm: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("design solver failed to certify within {iterations} iterations: best max leverage {best:.6} exceeds {bound:.6}")]
    DesignNotCertified {
        iterations: usize,
        best: f64,
        bound: f64,
    },

    #[error("assortment design too large: {units} units exceeds the cap of {cap}; use a smaller N or L")]
    DesignTooLarge { units: usize, cap: usize },

    #[error("empty feasible set: {0}")]
    EmptyFeasibleSet(String),

    #[error("instance too large for exhaustive search: {assignments:e} assignments exceeds the cap of {cap:e}")]
    InstanceTooLarge { assignments: f64, cap: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
