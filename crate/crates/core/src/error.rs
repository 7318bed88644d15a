use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coefficient {index} is not finite")]
    NonFiniteCoefficient { index: usize },

    #[error("process is not stable (spectral radius {spectral_radius})")]
    UnstableProcess { spectral_radius: f64 },

    #[error("series {series} has {len} samples, which does not exceed the lag bound {lag}")]
    LagTooLarge { series: usize, len: usize, lag: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no feasible lag bound for n_min = {n_min} under the given constants; override the lag constant or supply the lag bound explicitly")]
    LagBoundInfeasible { n_min: usize },

    #[error("all {probes} probes had a nonpositive concentration bracket")]
    DegenerateProbe { probes: usize },

    #[error("invalid AR process specification: {0}")]
    InvalidSpec(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
}

pub type Result<T> = std::result::Result<T, Error>;
