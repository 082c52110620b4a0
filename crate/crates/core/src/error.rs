use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("steady state is not unique (kernel dimension {kernel_dim})")]
    DegenerateSteadyState { kernel_dim: usize },

    #[error("polarization undefined: ground manifold is empty")]
    UndefinedPolarization,

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("fit domain error: {0}")]
    FitDomain(String),

    #[error("invalid pulse sequence: {0}")]
    Sequence(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
