use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid permutation {0:?}")]
    InvalidPermutation(Vec<usize>),
    #[error("cannot reshape {from:?} ({from_len} elements) into {to:?}")]
    ElementCountMismatch {
        from: Vec<usize>,
        from_len: usize,
        to: Vec<usize>,
    },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("unknown activation `{0}`")]
    UnknownActivation(String),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
    #[error("degenerate knot vector: {0}")]
    DegenerateKnots(String),
    #[error("retained modes {modes:?} exceed resolution {extents:?}")]
    ModesExceedResolution {
        modes: Vec<usize>,
        extents: Vec<usize>,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("permeability must be positive everywhere (found {0})")]
    NonPositivePermeability(f64),
    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    CgNoConvergence { iterations: usize, residual: f64 },
    #[error("cell {cell:?} outside grid {grid:?}")]
    CellOutOfGrid { cell: [usize; 3], grid: [usize; 3] },
    #[error("invalid well mask `{0}`")]
    InvalidMask(String),
    #[error("empty data")]
    EmptyData,
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("reference has zero norm")]
    ZeroReference,
    #[error("missing channel `{0}`")]
    MissingChannel(String),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("pre-activation range [{lo}, {hi}] not covered by fit interval [{fit_lo}, {fit_hi}]")]
    DomainNotCovered {
        lo: f64,
        hi: f64,
        fit_lo: f64,
        fit_hi: f64,
    },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt record: {0}")]
    CorruptRecord(String),
    #[error("missing record `{0}`")]
    MissingRecord(String),
    #[error("metadata: {0}")]
    Metadata(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
