use ndarray::{Array2, Zip};

use super::fourier::{momentum_diagonal, spectral};
use super::{Expectation, GridSpec, Observable, WaveFunction, HERMITIAN_TRACE_TOL};
use crate::linalg::{hermitian_eigenvalues, hermitize, trace_product};
use crate::{Error, Result, C64};

/// Eigenvalue floor below which a warning is logged.
pub const POSITIVITY_WARN: f64 = -1e-6;
/// Eigenvalue floor below which evolution aborts.
pub const POSITIVITY_ABORT: f64 = -1e-3;
/// Largest grid for which dense density matrices are supported.
pub const MAX_DENSE_POINTS: usize = 512;

/// Reduced state of the system in the position representation.
///
/// `elements[[i, j]] = ρ(x_i, x_j)`, normalised so that `Σ_i ρ(x_i, x_i)·dx = 1`.
/// The operator matrix in the orthonormal grid basis is `elements·dx`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    grid: GridSpec,
    elements: Array2<C64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entropies {
    pub purity: f64,
    pub linear_entropy: f64,
    pub von_neumann_entropy: f64,
    /// Total magnitude of negative eigenvalues clamped before the logarithm.
    pub clamped_mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Positivity {
    Ok { min_eigenvalue: f64 },
    Warning { min_eigenvalue: f64 },
}

impl DensityMatrix {
    pub fn new(grid: GridSpec, elements: Array2<C64>) -> Result<Self> {
        let n = grid.n();
        if n > MAX_DENSE_POINTS {
            return Err(Error::InvalidGrid(format!("dense density matrices support n ≤ {MAX_DENSE_POINTS}, got {n}")));
        }
        if elements.dim() != (n, n) {
            return Err(Error::InvalidGrid(format!("expected {n}×{n} elements, got {:?}", elements.dim())));
        }
        let elements = elements.as_standard_layout().into_owned();
        Ok(DensityMatrix { grid, elements })
    }

    pub fn pure(psi: &WaveFunction) -> Self {
        DensityMatrix { grid: psi.grid().clone(), elements: psi.outer() }
    }

    /// `Σ_k w_k |ψ_k⟩⟨ψ_k|` with weights normalised to one.
    pub fn mixture(parts: &[(f64, &WaveFunction)]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::param("parts", "empty mixture"))?;
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        let mut acc = Array2::zeros((first.1.grid().n(), first.1.grid().n()));
        for (w, psi) in parts {
            acc.scaled_add(C64::new(w / total, 0.0), &psi.outer());
        }
        Self::new(first.1.grid().clone(), acc)
    }

    /// Build from the operator matrix in the orthonormal grid basis.
    pub fn from_operator(grid: GridSpec, op: Array2<C64>) -> Result<Self> {
        let inv_dx = 1.0 / grid.dx();
        Self::new(grid, op.mapv(|z| z * inv_dx))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn elements(&self) -> &Array2<C64> {
        &self.elements
    }

    pub(crate) fn elements_mut(&mut self) -> &mut Array2<C64> {
        &mut self.elements
    }

    /// Operator matrix in the orthonormal basis, `ρ·dx`.
    pub fn operator(&self) -> Array2<C64> {
        let dx = self.grid.dx();
        self.elements.mapv(|z| z * dx)
    }

    pub fn trace(&self) -> C64 {
        self.elements.diag().sum() * self.grid.dx()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let t = self.trace().re;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::param("rho", "trace is not positive"));
        }
        let s = 1.0 / t;
        self.elements.mapv_inplace(|z| z * s);
        Ok(())
    }

    pub fn hermitize(&mut self) {
        hermitize(&mut self.elements);
    }

    /// Largest `|ρ_ij − ρ_ji*|` (zero for a Hermitian kernel).
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.grid.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.elements[[i, j]] - self.elements[[j, i]].conj()).norm());
            }
        }
        worst
    }

    /// Position distribution `⟨x|ρ|x⟩` (a density: integrates to one with `dx`).
    pub fn position_density(&self) -> Vec<f64> {
        self.elements.diag().iter().map(|z| z.re).collect()
    }

    /// Momentum probabilities per FFT bin.
    pub fn momentum_probabilities(&self) -> Vec<f64> {
        let sp = spectral(self.grid.n());
        let dx = self.grid.dx();
        momentum_diagonal(&sp, &self.elements).into_iter().map(|z| z.re * dx).collect()
    }

    pub fn purity(&self) -> f64 {
        let dx = self.grid.dx();
        self.elements.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx * dx
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(self.operator().view())
    }

    pub fn purity_and_entropy(&self) -> Entropies {
        let purity = self.purity();
        let ev = self.eigenvalues();
        let clamped_mass: f64 = ev.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
        if clamped_mass > 1e-4 {
            log::warn!("positivity: clamped {clamped_mass:.3e} of negative eigenvalue mass");
        }
        let von_neumann_entropy = ev.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
        Entropies { purity, linear_entropy: 1.0 - purity, von_neumann_entropy, clamped_mass }
    }

    /// Check the eigenvalue floor: warn below [`POSITIVITY_WARN`], fail below
    /// [`POSITIVITY_ABORT`].
    pub fn check_positivity(&self) -> Result<Positivity> {
        let min = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min < POSITIVITY_ABORT {
            Err(Error::PositivityError { min_eigenvalue: min })
        } else if min < POSITIVITY_WARN {
            log::warn!("positivity: minimum eigenvalue {min:.3e}");
            Ok(Positivity::Warning { min_eigenvalue: min })
        } else {
            Ok(Positivity::Ok { min_eigenvalue: min })
        }
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_with_pure(&self, psi: &WaveFunction) -> f64 {
        let a = psi.amplitudes();
        let dx = self.grid.dx();
        let mut acc = C64::new(0.0, 0.0);
        for (i, row) in self.elements.rows().into_iter().enumerate() {
            let r: C64 = row.iter().zip(a).map(|(rho, aj)| rho * aj).sum();
            acc += a[i].conj() * r;
        }
        acc.re * dx * dx
    }

    /// Convex combination `λ·self + (1−λ)·other`.
    pub fn blend(&self, lambda: f64, other: &DensityMatrix) -> Result<Self> {
        let mut e = self.elements.mapv(|z| z * lambda);
        Zip::from(&mut e).and(&other.elements).for_each(|a, b| *a += b * (1.0 - lambda));
        Self::new(self.grid.clone(), e)
    }

    fn momentum_moment(&self, power: i32) -> Result<f64> {
        let sp = spectral(self.grid.n());
        let k = self.grid.wavenumbers();
        let d = momentum_diagonal(&sp, &self.elements);
        let total: C64 = d.iter().zip(&k).map(|(z, k)| z * k.powi(power)).sum::<C64>() * self.grid.dx();
        check_real(total / self.trace().re)
    }
}

fn check_real(z: C64) -> Result<f64> {
    if z.im.abs() > HERMITIAN_TRACE_TOL * z.re.abs().max(1.0) {
        return Err(Error::NonHermitianState { imag: z.im });
    }
    Ok(z.re)
}

impl Expectation for DensityMatrix {
    fn expectation(&self, obs: &Observable) -> Result<f64> {
        let xs = self.grid.positions();
        let dx = self.grid.dx();
        let diag = self.elements.diag();
        let tr = self.trace();
        check_real(tr)?;
        let pos = |f: &dyn Fn(usize, f64) -> f64| -> Result<f64> {
            let s: C64 = diag.iter().zip(&xs).enumerate().map(|(i, (z, x))| z * f(i, *x)).sum::<C64>() * dx;
            check_real(s / tr.re)
        };
        match obs {
            Observable::X => pos(&|_, x| x),
            Observable::X2 => pos(&|_, x| x * x),
            Observable::P => self.momentum_moment(1),
            Observable::P2 => self.momentum_moment(2),
            Observable::Diagonal(v) => {
                if v.len() != xs.len() {
                    return Err(Error::param("observable", "diagonal length mismatch"));
                }
                pos(&|i, _| v[i])
            }
        }
    }
}

/// `Tr(A·ρ)` for an operator `A` given in the orthonormal grid basis.
pub fn operator_expectation(op: &Array2<C64>, rho: &DensityMatrix) -> C64 {
    trace_product(op.view(), rho.elements().view()) * rho.grid().dx()
}
