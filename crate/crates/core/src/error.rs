use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate quasimatrix: every row has zero norm")]
    DegenerateQuasimatrix,

    #[error("particle in degenerate region: zero-norm row at particle {0}")]
    ParticleInDegenerateRegion(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("density is not normalized; only ratio-based consumers may use it")]
    Unnormalized,

    #[error("density has zero total mass")]
    ZeroMass,

    #[error("zero sampling probability at design point {0}")]
    ZeroProbability(usize),

    #[error("no trials requested")]
    NoTrials,

    #[error("empty design")]
    EmptyDesign,

    #[error("node {0} is on the boundary")]
    BoundaryNode(usize),

    #[error("singular system: non-positive pivot {pivot} at row {row}")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("ensemble needs at least {needed} particles, got {got}")]
    TooFewParticles { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
