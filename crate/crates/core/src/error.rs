//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel singular at origin")]
    KernelSingularAtOrigin,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("band unresolved: cell size {h} exceeds {limit} required for band {band}")]
    BandUnresolved { h: f64, limit: f64, band: i32 },

    #[error("memory bound exceeded: {cells} cells over limit {limit}")]
    MemoryBound { cells: usize, limit: usize },

    #[error("zero function")]
    ZeroFunction,

    #[error("support too small")]
    SupportTooSmall,

    #[error("projection annihilates f")]
    ProjectionAnnihilates,

    #[error("width unresolved: width {width} below 2h = {min}")]
    WidthUnresolved { width: f64, min: f64 },

    #[error("geometry violation: {0}")]
    Geometry(String),

    #[error("misaligned grid: {0}")]
    MisalignedGrid(String),

    #[error("cover verification failed: {0}")]
    CoverVerification(String),

    #[error("functional does not satisfy the stated precondition: {0}")]
    Precondition(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    MalformedFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;
