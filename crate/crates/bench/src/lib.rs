//! Shared fixtures for the benchmarks.

use branchfall_core::pointer::{build_povm, Quadrature};
use branchfall_core::qstate::coherent_state;
use branchfall_core::{DensityMatrix, GridSpec, POVMSet, PhasePartition, PhasePoint};

pub fn grid(n: usize) -> GridSpec {
    GridSpec::symmetric(n, 16.0, 1.0).expect("valid grid")
}

pub fn packet(g: &GridSpec) -> DensityMatrix {
    DensityMatrix::pure(
        &coherent_state(g, PhasePoint::new(2.0, 0.0), std::f64::consts::FRAC_1_SQRT_2).expect("packet fits"),
    )
}

/// An 8 × 6 tiling of `[-9, 9] × [-6.75, 6.75]`.
pub fn povm(g: &GridSpec) -> POVMSet {
    let part = PhasePartition::covering((-9.0, 9.0), (-6.75, 6.75), 2.25, 2.25).expect("valid partition");
    build_povm(g, &part, std::f64::consts::FRAC_1_SQRT_2, Quadrature::default()).expect("window covers the grid")
}
