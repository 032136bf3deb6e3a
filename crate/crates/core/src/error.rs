use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid wavelength grid: {0}")]
    InvalidGrid(String),

    #[error("wavelength grids differ: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("target range {target_lo}..{target_hi} nm is outside source range {source_lo}..{source_hi} nm")]
    OutOfRange {
        target_lo: f64,
        target_hi: f64,
        source_lo: f64,
        source_hi: f64,
    },

    #[error("{role} curve has negative value {value} at {wavelength} nm")]
    NegativeValue {
        role: &'static str,
        wavelength: f64,
        value: f64,
    },

    #[error("non-finite value at sample {index}")]
    NonFinite { index: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid rank {rank}: must lie in 1..={max}")]
    InvalidRank { rank: usize, max: usize },

    #[error("invalid gain triple ({0}, {1}, {2}): gains must be finite and non-negative")]
    InvalidGain(f64, f64, f64),

    #[error("primary images are rank deficient; gains cannot be estimated")]
    DegeneratePrimaries,

    #[error("scale anchor at {wavelength} nm is infeasible for the illumination basis")]
    InfeasibleAnchor { wavelength: f64 },

    #[error("constraint set of a sub-problem is empty")]
    Infeasible,

    #[error("sub-problem objective is unbounded below")]
    Unbounded,

    #[error("white point must have positive components, got ({0}, {1}, {2})")]
    InvalidWhite(f64, f64, f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
