use ndarray::Array2;

use super::fourier::{self, spectral};
use super::{Expectation, GridSpec, Observable};
use crate::{Error, Result, C64};

/// A pure state of the system, sampled on a [`GridSpec`].
///
/// Amplitudes follow the continuum normalisation `Σ|ψ_i|²·dx = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    grid: GridSpec,
    amplitudes: Vec<C64>,
}

impl WaveFunction {
    pub fn new(grid: GridSpec, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != grid.n() {
            return Err(Error::InvalidGrid(format!("expected {} amplitudes, got {}", grid.n(), amplitudes.len())));
        }
        if amplitudes.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::param("amplitudes", "non-finite amplitude"));
        }
        Ok(WaveFunction { grid, amplitudes })
    }

    /// Build from a function of position and normalise.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> C64) -> Result<Self> {
        let amps = grid.positions().into_iter().map(f).collect();
        let mut psi = Self::new(grid, amps)?;
        psi.normalize()?;
        Ok(psi)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::param("amplitudes", "cannot normalise a zero state"));
        }
        let s = 1.0 / n.sqrt();
        self.amplitudes.iter_mut().for_each(|z| *z *= s);
        Ok(())
    }

    /// Position probability density `|ψ(x)|²`.
    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Inner product `⟨self|other⟩`.
    pub fn inner(&self, other: &WaveFunction) -> C64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum::<C64>() * self.grid.dx()
    }

    pub fn fidelity(&self, other: &WaveFunction) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Amplitudes in FFT order, scaled so `Σ|φ_k|² = 1` for a normalised state.
    pub fn momentum_amplitudes(&self) -> Vec<C64> {
        let sp = spectral(self.grid.n());
        let mut buf = self.amplitudes.clone();
        sp.forward(&mut buf);
        let s = (self.grid.dx() / self.grid.n() as f64).sqrt();
        buf.iter_mut().for_each(|z| *z *= s);
        buf
    }

    /// Inverse of [`Self::momentum_amplitudes`].
    pub fn from_momentum_amplitudes(grid: GridSpec, phi: &[C64]) -> Result<Self> {
        let sp = spectral(grid.n());
        let mut buf = phi.to_vec();
        sp.inverse(&mut buf);
        let s = 1.0 / (grid.dx() * grid.n() as f64).sqrt();
        buf.iter_mut().for_each(|z| *z *= s);
        Self::new(grid, buf)
    }

    /// Momentum probabilities per FFT bin, summing to the norm.
    pub fn momentum_probabilities(&self) -> Vec<f64> {
        self.momentum_amplitudes().iter().map(|z| z.norm_sqr()).collect()
    }

    /// Spectral derivative `∂ψ/∂x` on the grid.
    pub fn derivative(&self) -> Vec<C64> {
        let sp = spectral(self.grid.n());
        fourier::derivative(&sp, &self.amplitudes, &self.grid.wavenumbers())
    }

    /// Position-space kernel `ψ(x)ψ*(x')`.
    pub fn outer(&self) -> Array2<C64> {
        let n = self.grid.n();
        Array2::from_shape_fn((n, n), |(i, j)| self.amplitudes[i] * self.amplitudes[j].conj())
    }

    /// Linear combination `a·self + b·other`, normalised.
    pub fn superpose(&self, a: C64, other: &WaveFunction, b: C64) -> Result<Self> {
        let amps = self.amplitudes.iter().zip(&other.amplitudes).map(|(x, y)| a * x + b * y).collect();
        let mut psi = Self::new(self.grid.clone(), amps)?;
        psi.normalize()?;
        Ok(psi)
    }

    fn momentum_moment(&self, power: i32) -> f64 {
        let k = self.grid.wavenumbers();
        let probs = self.momentum_probabilities();
        let total: f64 = probs.iter().sum();
        probs.iter().zip(&k).map(|(p, k)| p * k.powi(power)).sum::<f64>() / total
    }
}

impl Expectation for WaveFunction {
    fn expectation(&self, obs: &Observable) -> Result<f64> {
        let dx = self.grid.dx();
        let xs = self.grid.positions();
        let dens = self.density();
        let pos = |f: &dyn Fn(usize, f64) -> f64| -> f64 {
            dens.iter().zip(&xs).enumerate().map(|(i, (d, x))| d * f(i, *x)).sum::<f64>() * dx / self.norm_sqr()
        };
        Ok(match obs {
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
        })
    }
}
