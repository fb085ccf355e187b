use crate::lattice::CellKind;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported lattice dimension {0}; expected 2 or 3")]
    Dimension(usize),

    #[error("lattice extent must be at least 1")]
    ZeroExtent,

    #[error("expected a {expected} field, got a {found} field")]
    CellKind { expected: CellKind, found: CellKind },

    #[error("{kind} field has {len} values but the lattice has {count} {kind} cells")]
    FieldLength { kind: CellKind, len: usize, count: usize },

    #[error("{0} requires open boundary conditions")]
    RequiresOpen(&'static str),

    #[error("{op} is only available in {supported} dimensions")]
    UnsupportedDimension { op: &'static str, supported: &'static str },

    #[error("source is not neutral: total charge {0}")]
    NotNeutral(f64),

    #[error("invalid link: {0}")]
    InvalidLink(String),

    #[error("invalid cutoff {0}; rotor cutoffs must be at least 1")]
    Cutoff(u32),

    #[error("Hilbert space dimension {dim} exceeds the configured limit {limit}")]
    DimensionLimit { dim: u128, limit: u64 },

    #[error("tensor factor {0} appears more than once in a product")]
    OverlappingFactors(usize),

    #[error("incompatible Hilbert space: {0}")]
    IncompatibleSpec(String),

    #[error("operator is not hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("requested {k} eigenvalues from a {dim}-dimensional space")]
    TooManyEigenvalues { k: usize, dim: usize },

    #[error("constraint operator is not diagonal in the product basis")]
    NonDiagonalConstraint,

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
