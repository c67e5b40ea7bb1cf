//! Crate-wide error type.

use thiserror::Error;

/// Everything that can go wrong across model validation, meshing, solving and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// The interface parameter must be strictly positive.
    #[error("gamma must be a positive finite number (got {0})")]
    NonPositiveGamma(f64),
    /// The mobility polynomial (plus floor) dips to zero or below on the admissible range.
    #[error("mobility attains {min:.6e} at s = {at:.6} on the admissible range; it must stay strictly positive")]
    MobilityNotBoundedBelow { min: f64, at: f64 },
    /// A quartic with non-positive leading coefficient has no lower bound.
    #[error("potential is unbounded below: quartic leading coefficient {0} is not positive")]
    PotentialUnboundedBelow(f64),
    /// Resource guard for mesh construction.
    #[error("refinement level {level} exceeds the resource guard (max {max})")]
    LevelTooLarge { level: u32, max: u32 },
    /// Prolongation target is not the refinement of the source space.
    #[error("fine space (level {fine}) is not the next refinement of the coarse space (level {coarse})")]
    SpaceNotNested { coarse: u32, fine: u32 },
    /// Trajectory comparison requires the fine time grid to contain the coarse nodes.
    #[error("time grids are not nested: coarse has {coarse} steps, fine has {fine}")]
    GridsNotNested { coarse: usize, fine: usize },
    /// A study needed a full trajectory but integration stopped early.
    #[error("trajectory incomplete: {0}")]
    IncompleteTrajectory(String),
    /// Newton's method failed to reach tolerance.
    #[error("Newton did not reach {tol:.1e} within {max_iter} iterations at step {step} (last residual {residual:.3e})")]
    NewtonDiverged {
        tol: f64,
        max_iter: usize,
        residual: f64,
        step: usize,
    },
    /// Sparse factorization or solve failed (singular or numerically broken system).
    #[error("sparse linear solve failed: {0}")]
    LinearSolveFailed(String),
    /// EOC is only defined for positive error values.
    #[error("error values must be positive to form an EOC (got {0:e})")]
    NonPositiveError(f64),
    /// Config file could not be parsed.
    #[error("config parse error: {0}")]
    ParseError(String),
    /// Config parsed but violates an invariant.
    #[error("config validation failed for `{key}`: {reason}")]
    ValidationError { key: String, reason: String },
    /// Plain I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
