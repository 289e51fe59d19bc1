//! Cached FFT plans and the handful of spectral kernels the rest of the
//! crate needs.

use ndarray::Array2;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::C64;

pub(crate) struct Spectral {
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

static PLANS: OnceLock<Mutex<HashMap<usize, Arc<Spectral>>>> = OnceLock::new();

pub(crate) fn spectral(n: usize) -> Arc<Spectral> {
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("fft plan cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Spectral { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) })
        })
        .clone()
}

impl Spectral {
    /// Unnormalised forward transform of every length-`n` chunk.
    pub fn forward(&self, buf: &mut [C64]) {
        self.fwd.process(buf);
    }

    /// Unnormalised inverse transform of every length-`n` chunk.
    pub fn inverse(&self, buf: &mut [C64]) {
        self.inv.process(buf);
    }

    /// Forward transform along each row of a standard-layout matrix.
    pub fn forward_rows(&self, a: &mut Array2<C64>) {
        self.forward(a.as_slice_mut().expect("standard layout"));
    }

    pub fn inverse_rows(&self, a: &mut Array2<C64>) {
        self.inverse(a.as_slice_mut().expect("standard layout"));
    }
}

pub(crate) fn transpose(a: &Array2<C64>) -> Array2<C64> {
    a.t().as_standard_layout().into_owned()
}

/// `ψ → F⁻¹ diag(phase) F ψ`, with the `1/n` normalisation folded in.
pub(crate) fn apply_momentum_diagonal(sp: &Spectral, psi: &mut [C64], phase: &[C64]) {
    sp.forward(psi);
    let scale = 1.0 / sp.n as f64;
    for (z, p) in psi.iter_mut().zip(phase) {
        *z *= p * scale;
    }
    sp.inverse(psi);
}

/// Spectral derivative `∂ψ/∂x`.
pub(crate) fn derivative(sp: &Spectral, psi: &[C64], k: &[f64]) -> Vec<C64> {
    let mut buf = psi.to_vec();
    sp.forward(&mut buf);
    let n = sp.n;
    let scale = 1.0 / n as f64;
    for (j, z) in buf.iter_mut().enumerate() {
        // The Nyquist bin has no well-defined sign; drop it.
        let kj = if n.is_multiple_of(2) && j == n / 2 { 0.0 } else { k[j] };
        *z *= C64::new(0.0, kj * scale);
    }
    sp.inverse(&mut buf);
    buf
}

/// Apply `U ρ U†` for `U = F⁻¹ diag(phase) F` to a position-space kernel.
pub(crate) fn conjugate_by_momentum_diagonal(sp: &Spectral, rho: &mut Array2<C64>, phase: &[C64]) {
    let n = sp.n;
    let scale = 1.0 / n as f64;
    // Bra index (columns): ρ U†, row by row — U† acts as F diag(phase*) F⁻¹.
    sp.inverse_rows(rho);
    for mut row in rho.rows_mut() {
        for (z, p) in row.iter_mut().zip(phase) {
            *z *= p.conj() * scale;
        }
    }
    sp.forward_rows(rho);
    // Ket index: transpose so the columns become rows.
    let mut t = transpose(rho);
    sp.forward_rows(&mut t);
    for mut row in t.rows_mut() {
        for (z, p) in row.iter_mut().zip(phase) {
            *z *= p * scale;
        }
    }
    sp.inverse_rows(&mut t);
    *rho = transpose(&t);
    debug_assert_eq!(rho.nrows(), n);
}

/// Diagonal of the momentum-space kernel, `⟨k|ρ|k⟩`, summing to `Σ_i ρ_ii`.
pub(crate) fn momentum_diagonal(sp: &Spectral, rho: &Array2<C64>) -> Vec<C64> {
    let n = sp.n;
    // B = ρ F⁻¹ (rows), then d_k = Σ_a F_{ka} B_{ak}.
    let mut b = rho.as_standard_layout().into_owned();
    sp.inverse_rows(&mut b);
    let mut t = transpose(&b);
    sp.forward_rows(&mut t);
    (0..n).map(|k| t[[k, k]] / n as f64).collect()
}
