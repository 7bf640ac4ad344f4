use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("grid extents must be non-empty")]
    EmptyExtents,
    #[error("grid extent along dimension {dim} must be at least 1")]
    ZeroExtent { dim: usize },
    #[error("grid has more than {cap} sites")]
    GridTooLarge { cap: usize },
    #[error("site index {index} out of range for grid with {sites} sites")]
    SiteOutOfRange { index: usize, sites: usize },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("n{group} must be ≥ 2 (got {count})")]
    TooFewSamples { group: u8, count: usize },
    #[error("zero sample variance in group {group} at site {site}")]
    ZeroVariance { group: u8, site: usize },
    #[error("non-finite observation in group {group} at row {row}, site {site}")]
    NonFiniteObservation { group: u8, row: usize, site: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("alpha must lie in (0,1), got {0}")]
    InvalidAlpha(f64),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("bandwidth matrix is not positive definite (h_s={h_s}, h_u={h_u}, rho={rho})")]
    NotPositiveDefinite { h_s: f64, h_u: f64, rho: f64 },
    #[error("auxiliary statistic has zero variance across sites")]
    DegenerateAuxiliary,
    #[error("replication {replication} (seed {seed}, sweep point {sweep_point}) failed: {source}")]
    Replication {
        seed: u64,
        replication: usize,
        sweep_point: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
