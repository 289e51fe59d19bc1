use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("packet truncated by the grid edge ({axis} tail mass {tail_mass:.3e})")]
    BoundaryViolation { axis: &'static str, tail_mass: f64 },

    #[error("state is not Hermitian: imaginary part of trace is {imag:.3e}")]
    NonHermitianState { imag: f64 },

    #[error("density matrix lost positivity: minimum eigenvalue {min_eigenvalue:.3e}")]
    PositivityError { min_eigenvalue: f64 },

    #[error("partition window does not cover the state: {0}")]
    WindowTooSmall(String),

    #[error("escape weight {weight:.3e} exceeds tolerance {tolerance:.3e} at t = {t}")]
    EscapeMass { weight: f64, tolerance: f64, t: f64 },

    #[error("live leaf count {leaves} exceeds the cap {cap}")]
    ExplosionGuard { leaves: usize, cap: usize },

    #[error("escape element sampled at t = {t}; trajectory terminated")]
    EscapeSampled { t: f64 },

    #[error("branch tree has no leaves")]
    EmptyTree,

    #[error("probability density {density:.3e} below floor at x = {x}")]
    NodeRegion { x: f64, density: f64 },

    #[error("step failed at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn at(self, t: f64) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            e => Error::AtTime { t, source: Box::new(e) },
        }
    }

    /// The innermost error, with any timestamp wrapper removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for numerical aborts (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::PositivityError { .. }
                | Error::NonHermitianState { .. }
                | Error::EscapeMass { .. }
                | Error::ExplosionGuard { .. }
                | Error::EscapeSampled { .. }
                | Error::NodeRegion { .. }
        )
    }
}
