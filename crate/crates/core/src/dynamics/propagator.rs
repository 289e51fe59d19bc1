use ndarray::Array2;
use std::sync::OnceLock;

use super::{CLParams, Potential};
use crate::qstate::fourier::{apply_momentum_diagonal, conjugate_by_momentum_diagonal, spectral};
use crate::qstate::{DensityMatrix, GridSpec, WaveFunction};
use crate::{Error, Result, C64};

/// Precomputed split-operator factors for a fixed substep `h`.
///
/// One substep is `K(h/2) · D(h) · K(h/2)` where `K` is the kinetic propagator
/// and `D` is diagonal in position. For wave functions `D = e^{−iV h}`; for
/// density kernels `D` is the elementwise factor
/// `e^{−i(V(x)−V(x'))h} · e^{−Λ(x−x')²h}`, which solves both the potential
/// commutator and the double commutator exactly. Adjacent kinetic halves of
/// consecutive substeps are merged.
#[derive(Clone, Debug)]
pub struct Propagator {
    grid: GridSpec,
    h: f64,
    kin_half: Vec<C64>,
    kin_full: Vec<C64>,
    pot: Vec<C64>,
    lambda: f64,
    /// Built on first use; wave-only propagation never needs it.
    kernel: OnceLock<Array2<C64>>,
}

impl Propagator {
    pub fn new(grid: &GridSpec, v: &Potential, cl: &CLParams, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::param("dt", "substep must be finite and positive"));
        }
        cl.validate()?;
        v.validate(grid)?;
        let m = grid.mass();
        let k = grid.wavenumbers();
        let kin =
            |tau: f64| -> Vec<C64> { k.iter().map(|&k| C64::from_polar(1.0, -k * k * tau / (2.0 * m))).collect() };
        let vals = v.values_on(grid);
        let pot: Vec<C64> = vals.iter().map(|&v| C64::from_polar(1.0, -v * h)).collect();
        Ok(Propagator {
            grid: grid.clone(),
            h,
            kin_half: kin(0.5 * h),
            kin_full: kin(h),
            pot,
            lambda: cl.lambda,
            kernel: OnceLock::new(),
        })
    }

    fn kernel(&self) -> &Array2<C64> {
        self.kernel.get_or_init(|| {
            let xs = self.grid.positions();
            let (pot, lambda, h) = (&self.pot, self.lambda, self.h);
            Array2::from_shape_fn((xs.len(), xs.len()), |(i, j)| {
                let d = xs[i] - xs[j];
                pot[i] * pot[j].conj() * (-lambda * d * d * h).exp()
            })
        })
    }

    pub fn substep(&self) -> f64 {
        self.h
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn advance_wave(&self, psi: &mut WaveFunction, steps: usize) {
        if steps == 0 {
            return;
        }
        let sp = spectral(self.grid.n());
        let a = psi.amplitudes_mut();
        apply_momentum_diagonal(&sp, a, &self.kin_half);
        for s in 0..steps {
            for (z, p) in a.iter_mut().zip(&self.pot) {
                *z *= p;
            }
            let k = if s + 1 == steps { &self.kin_half } else { &self.kin_full };
            apply_momentum_diagonal(&sp, a, k);
        }
    }

    pub fn advance_density(&self, rho: &mut DensityMatrix, steps: usize) {
        if steps == 0 {
            return;
        }
        let sp = spectral(self.grid.n());
        let kernel = self.kernel();
        let e = rho.elements_mut();
        conjugate_by_momentum_diagonal(&sp, e, &self.kin_half);
        for s in 0..steps {
            *e *= kernel;
            let k = if s + 1 == steps { &self.kin_half } else { &self.kin_full };
            conjugate_by_momentum_diagonal(&sp, e, k);
        }
        rho.hermitize();
    }
}
