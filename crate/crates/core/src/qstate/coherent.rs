use statrs::function::erf::erfc;
use std::f64::consts::SQRT_2;

use super::{GridSpec, PhasePoint, WaveFunction};
use crate::{Error, Result, C64};

/// Allowed tail mass of a coherent packet beyond the grid, in either
/// position or momentum.
pub const COHERENT_TAIL_TOL: f64 = 1e-10;

fn gaussian_tail(lo: f64, hi: f64, centre: f64, sigma: f64) -> f64 {
    0.5 * erfc((centre - lo) / (SQRT_2 * sigma)) + 0.5 * erfc((hi - centre) / (SQRT_2 * sigma))
}

/// Minimum-uncertainty Gaussian `A·exp(−(x−Q)²/(4σ²))·exp(iPx)`.
///
/// Fails with [`Error::BoundaryViolation`] if more than
/// [`COHERENT_TAIL_TOL`] of the packet would fall outside the position grid or
/// outside the representable momentum band.
pub fn coherent_state(grid: &GridSpec, z: PhasePoint, sigma_x: f64) -> Result<WaveFunction> {
    if !(sigma_x.is_finite() && sigma_x > 0.0) {
        return Err(Error::param("sigma_x", "must be positive"));
    }
    if !z.is_finite() {
        return Err(Error::param("z", "non-finite phase point"));
    }
    if 4.0 * sigma_x >= grid.length() {
        return Err(Error::param("sigma_x", "packet wider than the grid"));
    }
    let tail = gaussian_tail(grid.x_min(), grid.x_max(), z.q, sigma_x);
    if tail > COHERENT_TAIL_TOL {
        return Err(Error::BoundaryViolation { axis: "position", tail_mass: tail });
    }
    let sigma_p = 0.5 / sigma_x;
    let pm = grid.p_max();
    let tail = gaussian_tail(-pm, pm, z.p, sigma_p);
    if tail > COHERENT_TAIL_TOL {
        return Err(Error::BoundaryViolation { axis: "momentum", tail_mass: tail });
    }
    WaveFunction::new(grid.clone(), coherent_amplitudes(grid, z, sigma_x))
}

/// Unchecked, grid-normalised coherent amplitudes.
pub fn coherent_amplitudes(grid: &GridSpec, z: PhasePoint, sigma_x: f64) -> Vec<C64> {
    let inv = 1.0 / (4.0 * sigma_x * sigma_x);
    let mut amps: Vec<C64> = grid
        .positions()
        .into_iter()
        .map(|x| {
            let d = x - z.q;
            C64::from_polar((-d * d * inv).exp(), z.p * x)
        })
        .collect();
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.dx();
    let s = 1.0 / norm.sqrt();
    amps.iter_mut().for_each(|a| *a *= s);
    amps
}

/// Analytic `|⟨Z|Z'⟩|²` for two coherent states of the same width.
pub fn coherent_overlap_sq(a: PhasePoint, b: PhasePoint, sigma_x: f64) -> f64 {
    let dq = a.q - b.q;
    let dp = a.p - b.p;
    (-(dq * dq / (4.0 * sigma_x * sigma_x) + sigma_x * sigma_x * dp * dp)).exp()
}
