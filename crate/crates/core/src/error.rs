use thiserror::Error;

/// Errors raised by the direction-finding pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{sources} sources are not identifiable with {elements} elements per subarray (need sources < elements)")]
    Identifiability { sources: usize, elements: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank deficiency: signal eigenvalue {index} exceeds the noise floor by {excess:.3e} (must be positive)")]
    RankDeficient { index: usize, excess: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures caused by the numerics rather than by the caller's parameters.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. } | Error::DegenerateInput(_) | Error::Domain(_)
        )
    }
}
