use thiserror::Error;

use crate::spaces::SpaceKind;

/// Errors produced by mesh construction, assembly, factorization and solves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("coarse grid parameter must be at least 1")]
    EmptyGrid,

    #[error("expected a {expected:?} space, got {found:?}")]
    WrongSpace { expected: SpaceKind, found: SpaceKind },

    #[error("space kinds differ: {0:?} vs {1:?}")]
    KindMismatch(SpaceKind, SpaceKind),

    #[error("meshes are not nested: {0}")]
    NotNested(String),

    #[error("spaces live on different meshes")]
    MeshMismatch,

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: usize, value: f64 },

    #[error("non-finite value encountered at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("need at least {required} CG iterations, have {found}")]
    TooFewIterations { required: usize, found: usize },

    #[error("dense oracle limited to dimension {limit}, got {found}")]
    TooLarge { limit: usize, found: usize },

    #[error("partition of unity vanishes at vertex {0}")]
    UncoveredVertex(usize),

    #[error("overlap of {0} layers requires at least one refinement")]
    Unrefined(usize),

    #[error("degenerate fit group: {0}")]
    DegenerateFit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
