use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("measure has total mass {mass}, expected 1 (pass normalize to rescale)")]
    NonProbabilityMass { mass: f64 },
    #[error("measure has an atom at x = 1 (mu({{1}}) must be 0; pass force to override)")]
    AtomAtOne,
    #[error("measure has empty support")]
    EmptySupport,
    #[error("measure violates the standing hypotheses: {0} (pass force to override)")]
    HypothesesViolated(String),
    #[error("adaptive quadrature exceeded {panels} panels (estimated error {error:e})")]
    QuadratureNonConvergence { panels: usize, error: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate denominator at entry k = {k}")]
    DegenerateDenominator { k: usize },
    #[error("iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("coefficient vector is zero")]
    ZeroVector,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
