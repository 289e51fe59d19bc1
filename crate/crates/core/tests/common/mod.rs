//! Reduction specs shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use branchfall_core::pointer::{Quadrature, QuadratureRule};
use branchfall_core::reduction::Physics;
use branchfall_core::{CLParams, EvolverConfig, GridSpec, PhasePartition, PhasePoint, Potential, ReductionSpec};

pub const HARMONIC_MASS: f64 = 20.0;

/// Harmonic oscillator, ω = 1, M = 20, Λ = 0.01, τ_c = two periods, four
/// collapses per period. Cells are 5σ on each side; the window covers the
/// orbits of both start points with a 3δ margin.
pub fn harmonic(delta: (f64, f64), n_traj: usize) -> ReductionSpec {
    let period = 2.0 * PI;
    let sigma = (0.5 / HARMONIC_MASS).sqrt();
    let xw = 0.5 + 3.0 * delta.0;
    let pw = 10.0 + 3.0 * delta.1;
    ReductionSpec {
        delta_z: delta,
        tau_c: 2.0 * period,
        d_c: vec![PhasePoint::new(0.5, 0.0), PhasePoint::new(0.0, -10.0)],
        epsilon: 0.05,
        n_traj,
        dt: period / 4.0,
        dt_cl: 1e-3,
        physics: Physics {
            grid: GridSpec::symmetric(128, 3.2, HARMONIC_MASS).unwrap(),
            potential: Potential::Harmonic { omega: 1.0 },
            cl: CLParams::new(0.01).unwrap(),
            partition: PhasePartition::covering((-xw, xw), (-pw, pw), 5.0 * sigma, 2.5 / sigma).unwrap(),
            sigma_x: sigma,
            quadrature: Quadrature::default(),
            evolver: EvolverConfig { dt_int: period / 16.0, positivity_every: 0, ..Default::default() },
        },
    }
}

/// The calibrated benchmark: δ = (0.6, 12), about 2.7 ground-state widths
/// on each axis.
pub fn harmonic_benchmark() -> ReductionSpec {
    harmonic((0.6, 12.0), 200)
}

/// Free particle under strong diffusion, judged on momentum alone.
///
/// One position cell spans the whole window: narrower position cells slice
/// the packet at every collapse and the back-action heats the momentum
/// beyond the ensemble's own diffusion.
pub fn free_diffusion(tau_c: f64, n_traj: usize) -> ReductionSpec {
    let (lambda, delta_p, mass) = (1.0, 1.5, 10.0);
    let pw = 3.0 * delta_p + 1.5;
    ReductionSpec {
        delta_z: (f64::INFINITY, delta_p),
        tau_c,
        d_c: vec![PhasePoint::new(0.0, 0.0)],
        epsilon: 0.05,
        n_traj,
        dt: 0.25,
        dt_cl: 0.01,
        physics: Physics {
            grid: GridSpec::symmetric(128, 24.0, mass).unwrap(),
            potential: Potential::Free,
            cl: CLParams::new(lambda).unwrap(),
            partition: PhasePartition::covering((-19.0, 19.0), (-pw, pw), 38.0, 1.0).unwrap(),
            sigma_x: 1.0,
            quadrature: Quadrature::new(24, 4, QuadratureRule::Midpoint),
            evolver: EvolverConfig { dt_int: 0.125, positivity_every: 0, ..Default::default() },
        },
    }
}

/// Median of the first-violation times.
pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
