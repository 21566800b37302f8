use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite angle: theta={theta}, phi={phi}")]
    NonFiniteAngle { theta: f64, phi: f64 },

    #[error("zero-length direction vector")]
    ZeroVector,

    #[error("particle index must be 1 or 2, got {0}")]
    InvalidParticle(u8),

    #[error("density matrix must be 2x2 or 4x4, got {rows}x{cols}")]
    BadDimension { rows: usize, cols: usize },

    #[error("density matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("density matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("density matrix has zero trace and cannot be renormalized")]
    ZeroTrace,

    #[error("mixture fraction must lie in [0, 1], got {0}")]
    InvalidMixture(f64),

    #[error("probability {0} outside [0, 1/2]")]
    ProbabilityOutOfRange(f64),

    #[error("planar geometry requires analyzers in the x-y plane (|z| = {0:e})")]
    OutOfPlaneAnalyzer(f64),

    #[error("doubled angles are only defined for the planar geometry when hidden axes are sampled")]
    DoubledSphere,

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("at least {needed} trials are needed, got {got}")]
    TooFewCounts { needed: u64, got: u64 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("fit is not identifiable: sse profile over the mixture fraction is flat")]
    NonIdentifiable,
}
