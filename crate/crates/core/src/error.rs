use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("lattice has no propagating points")]
    EmptyLattice,

    #[error("scatterer at distance {distance_m:.3e} m from element {element} is too close to the array")]
    ScattererTooClose { element: usize, distance_m: f64 },

    #[error("basis is rank deficient (pivot {pivot:.3e} at column {column})")]
    RankDeficient { column: usize, pivot: f64 },

    #[error("zero-energy input: {0}")]
    ZeroEnergy(&'static str),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("malformed channel file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            actual,
            context,
        })
    }
}
