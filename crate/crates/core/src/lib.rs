//! Open-system quantum dynamics on a one-dimensional grid, with the
//! machinery needed to watch classical trajectories emerge from it.
//!
//! The crate is organised bottom-up:
//!
//! * [`qstate`] – grids, wave functions, density matrices, coherent states
//!   and scalar observables.
//! * [`dynamics`] – split-operator Schrödinger stepping and the
//!   Caldeira-Leggett master equation `i dρ/dt = [H, ρ] − iΛ[X,[X,ρ]]`.
//! * [`pointer`] – phase-space partitions, coherent-state POVMs and the
//!   predictability sieve.
//! * [`branching`] – branch trees, Born-rule trajectory sampling, an explicit
//!   system ⊗ qubit-bath model and the decoherence functional.
//! * [`mechanisms`] – GRW hits and de Broglie-Bohm guidance.
//! * [`ehrenfest`] – open-system Ehrenfest residuals, ensemble widths and the
//!   classicality horizon.
//! * [`reduction`] – the classical comparison model and the empirical
//!   reduction verifier.
//!
//! Units are dimensionless with ħ = 1 everywhere.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branching;
pub mod dynamics;
pub mod ehrenfest;
mod error;
pub mod linalg;
pub mod mechanisms;
pub mod pointer;
pub mod qstate;
pub mod reduction;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::C64;

pub use branching::{BranchNode, BranchTree, ExplicitModel, Trajectory};
pub use dynamics::{CLParams, EvolverConfig, Potential, TimeSeries};
pub use mechanisms::{BohmEnsemble, GRWParams};
pub use pointer::{POVMSet, PhasePartition};
pub use qstate::{DensityMatrix, GridSpec, Observable, PhasePoint, WaveFunction};
pub use reduction::{ReductionReport, ReductionSpec};
