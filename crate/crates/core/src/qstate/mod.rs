//! Discretised 1D quantum states of the system, canonical operators and
//! scalar observables.
//!
//! Grids are periodic; the momentum operator is applied spectrally.  Packets
//! are kept away from the edges by tail-mass checks rather than absorbing
//! boundaries.

mod coherent;
mod density;
pub(crate) mod fourier;
mod grid;
mod wavefunction;

pub use coherent::{coherent_amplitudes, coherent_overlap_sq, coherent_state};
pub use density::{operator_expectation, DensityMatrix, Entropies, Positivity, POSITIVITY_ABORT, POSITIVITY_WARN};
pub use grid::GridSpec;
pub use wavefunction::WaveFunction;

use serde::{Deserialize, Serialize};

/// A point `Z = (Q, P)` of the classical phase space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: f64,
    pub p: f64,
}

impl PhasePoint {
    pub const fn new(q: f64, p: f64) -> Self {
        PhasePoint { q, p }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.p.is_finite()
    }
}

impl std::ops::Sub for PhasePoint {
    type Output = PhasePoint;
    fn sub(self, o: PhasePoint) -> PhasePoint {
        PhasePoint::new(self.q - o.q, self.p - o.p)
    }
}

impl std::ops::Add for PhasePoint {
    type Output = PhasePoint;
    fn add(self, o: PhasePoint) -> PhasePoint {
        PhasePoint::new(self.q + o.q, self.p + o.p)
    }
}

/// Observables whose expectation value can be taken on either state type.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    X,
    P,
    X2,
    P2,
    /// A real function of position, sampled on the grid.
    Diagonal(Vec<f64>),
}

/// Expectation values of [`Observable`]s.
pub trait Expectation {
    fn expectation(&self, obs: &Observable) -> crate::Result<f64>;

    fn mean_x(&self) -> f64 {
        self.expectation(&Observable::X).unwrap_or(f64::NAN)
    }

    fn mean_p(&self) -> f64 {
        self.expectation(&Observable::P).unwrap_or(f64::NAN)
    }

    fn var_x(&self) -> f64 {
        let m = self.mean_x();
        self.expectation(&Observable::X2).unwrap_or(f64::NAN) - m * m
    }

    fn var_p(&self) -> f64 {
        let m = self.mean_p();
        self.expectation(&Observable::P2).unwrap_or(f64::NAN) - m * m
    }
}

/// Imaginary residual above which a trace is rejected as non-Hermitian.
pub const HERMITIAN_TRACE_TOL: f64 = 1e-6;
