use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dynamics::Potential;
use crate::qstate::fourier::{apply_momentum_diagonal, spectral};
use crate::qstate::{DensityMatrix, GridSpec, WaveFunction};
use crate::{Error, Result, C64};

/// Largest supported bath.
pub const MAX_QUBITS: usize = 12;

/// System ⊗ qubit-bath model with `H = H_S + X ⊗ Σ_j g_j σ_z^{(j)} + Σ_j h_j σ_x^{(j)}`.
///
/// `state[[b, i]] = Ψ(x_i, b)`; bit `j` of `b` set means `σ_z^{(j)} = −1`.
/// The norm is `Σ_{b,i} |Ψ|²·dx = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitModel {
    grid: GridSpec,
    couplings: Vec<f64>,
    fields: Vec<f64>,
    potential: Potential,
    system_hamiltonian: bool,
    state: Array2<C64>,
    t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitOptions {
    pub potential: Potential,
    /// `false` drops `H_S` entirely, leaving pure dephasing.
    pub system_hamiltonian: bool,
    /// Optional `σ_x` fields `h_j`, one per qubit.
    pub fields: Vec<f64>,
}

impl Default for ExplicitOptions {
    fn default() -> Self {
        ExplicitOptions { potential: Potential::Free, system_hamiltonian: true, fields: Vec::new() }
    }
}

impl ExplicitModel {
    /// `ψ ⊗ |+⟩^{⊗k}`.
    pub fn new(psi: &WaveFunction, couplings: Vec<f64>, options: ExplicitOptions) -> Result<Self> {
        let k = couplings.len();
        if k > MAX_QUBITS {
            return Err(Error::param("k", format!("at most {MAX_QUBITS} qubits, got {k}")));
        }
        if couplings.iter().any(|g| !g.is_finite()) {
            return Err(Error::param("couplings", "must be finite"));
        }
        if !options.fields.is_empty() && options.fields.len() != k {
            return Err(Error::param("fields", "need one field per qubit"));
        }
        options.potential.validate(psi.grid())?;
        let dim = 1usize << k;
        let amp = 1.0 / (dim as f64).sqrt();
        let a = psi.amplitudes();
        let state = Array2::from_shape_fn((dim, a.len()), |(_, i)| a[i] * amp);
        Ok(ExplicitModel {
            grid: psi.grid().clone(),
            couplings,
            fields: options.fields,
            potential: options.potential,
            system_hamiltonian: options.system_hamiltonian,
            state,
            t: 0.0,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn k(&self) -> usize {
        self.couplings.len()
    }

    pub fn env_dim(&self) -> usize {
        self.state.nrows()
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn state(&self) -> &Array2<C64> {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn norm_sqr(&self) -> f64 {
        self.state.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    /// `Σ_j g_j s_j(b)`.
    pub fn env_energy(&self, b: usize) -> f64 {
        self.couplings.iter().enumerate().map(|(j, g)| if b >> j & 1 == 0 { *g } else { -*g }).sum()
    }

    fn kinetic(&mut self, tau: f64) {
        let sp = spectral(self.grid.n());
        let m = self.grid.mass();
        let phase: Vec<C64> =
            self.grid.wavenumbers().iter().map(|&k| C64::from_polar(1.0, -k * k * tau / (2.0 * m))).collect();
        for mut row in self.state.rows_mut() {
            apply_momentum_diagonal(&sp, row.as_slice_mut().expect("row-major"), &phase);
        }
    }

    fn field_rotation(&mut self, tau: f64) {
        let dim = self.env_dim();
        for (j, h) in self.fields.iter().enumerate() {
            let (c, s) = ((h * tau).cos(), (h * tau).sin());
            let bit = 1usize << j;
            for b in 0..dim {
                if b & bit != 0 {
                    continue;
                }
                let (lo, hi) = self.state.multi_slice_mut((ndarray::s![b, ..], ndarray::s![b | bit, ..]));
                for (x, y) in lo.into_iter().zip(hi) {
                    let (a0, a1) = (*x, *y);
                    *x = a0 * c - C64::new(0.0, s) * a1;
                    *y = a1 * c - C64::new(0.0, s) * a0;
                }
            }
        }
    }

    /// One symmetric Trotter step of length `dt`.
    pub fn step(&mut self, dt: f64) {
        let xs = self.grid.positions();
        let v: Vec<f64> =
            if self.system_hamiltonian { self.potential.values_on(&self.grid) } else { vec![0.0; xs.len()] };
        if self.system_hamiltonian {
            self.kinetic(0.5 * dt);
        }
        self.field_rotation(0.5 * dt);
        for b in 0..self.env_dim() {
            let e = self.env_energy(b);
            for (i, z) in self.state.row_mut(b).iter_mut().enumerate() {
                *z *= C64::from_polar(1.0, -(v[i] + xs[i] * e) * dt);
            }
        }
        self.field_rotation(0.5 * dt);
        if self.system_hamiltonian {
            self.kinetic(0.5 * dt);
        }
        self.t += dt;
    }

    pub fn evolve(&mut self, dt: f64, n_steps: usize) {
        for _ in 0..n_steps {
            self.step(dt);
        }
    }

    /// `ρ_S = Tr_E |Ψ⟩⟨Ψ|`.
    pub fn reduced_density(&self) -> Result<DensityMatrix> {
        let s = &self.state;
        // ρ(x, x') = Σ_b Ψ(x, b) Ψ*(x', b)
        let rho = s.t().dot(&s.mapv(|z| z.conj()));
        DensityMatrix::new(self.grid.clone(), rho)
    }

    /// Normalised environment state conditioned on grid node `i`.
    pub fn conditioned_env(&self, i: usize) -> Option<Vec<C64>> {
        let col = self.state.column(i);
        let n: f64 = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        (n > 0.0).then(|| col.iter().map(|z| z / n).collect())
    }

    /// `|⟨φ(x_a)|φ(x_b)⟩|` for the environment states conditioned on the
    /// grid nodes nearest `xa` and `xb`.
    pub fn env_overlap(&self, xa: f64, xb: f64) -> f64 {
        let (i, j) = (self.grid.nearest_index(xa), self.grid.nearest_index(xb));
        match (self.conditioned_env(i), self.conditioned_env(j)) {
            (Some(a), Some(b)) => a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum::<C64>().norm(),
            _ => 0.0,
        }
    }

    /// Apply a system operator, given in the orthonormal grid basis, to
    /// every environment component. The result is not renormalised.
    pub fn apply_system_operator(&self, op: &Array2<C64>) -> Result<Self> {
        if op.dim() != (self.grid.n(), self.grid.n()) {
            return Err(Error::param("operator", "dimension does not match the grid"));
        }
        let mut out = self.clone();
        out.state = self.state.dot(&op.t());
        Ok(out)
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sqr();
        if !(n > 0.0) {
            return Err(Error::param("state", "zero norm"));
        }
        let s = 1.0 / n.sqrt();
        self.state.mapv_inplace(|z| z * s);
        Ok(self)
    }

    /// `⟨self|other⟩` over system and environment.
    pub fn inner(&self, other: &ExplicitModel) -> C64 {
        self.state.iter().zip(other.state.iter()).map(|(a, b)| a.conj() * b).sum::<C64>() * self.grid.dx()
    }

    /// Configuration-space probabilities `|Ψ(x_i, b)|²·dx`.
    pub fn configuration_probabilities(&self) -> Array2<f64> {
        let dx = self.grid.dx();
        self.state.mapv(|z| z.norm_sqr() * dx)
    }

    /// System marginal `Σ_b |Ψ(x, b)|²`, a density in `x`.
    pub fn position_density(&self) -> Vec<f64> {
        self.state.mapv(|z| z.norm_sqr()).sum_axis(Axis(0)).to_vec()
    }

    /// Row `b` of the state: the system wave function in branch `b`, unnormalised.
    pub fn component(&self, b: usize) -> Vec<C64> {
        self.state.row(b).to_vec()
    }

    /// Build directly from components (normalised on the way in).
    pub fn from_components(
        grid: GridSpec,
        couplings: Vec<f64>,
        options: ExplicitOptions,
        state: Array2<C64>,
    ) -> Result<Self> {
        let k = couplings.len();
        if k > MAX_QUBITS {
            return Err(Error::param("k", format!("at most {MAX_QUBITS} qubits, got {k}")));
        }
        if state.dim() != (1 << k, grid.n()) {
            return Err(Error::param("state", "expected 2^k × n components"));
        }
        ExplicitModel {
            grid,
            couplings,
            fields: options.fields,
            potential: options.potential,
            system_hamiltonian: options.system_hamiltonian,
            state: state.as_standard_layout().into_owned(),
            t: 0.0,
        }
        .normalized()
    }
}

/// Environment-overlap and reduced-state diagnostics after an explicit run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceReport {
    pub t: f64,
    pub probes: Vec<f64>,
    /// `[a][b] = |⟨φ(x_a)|φ(x_b)⟩|`.
    pub env_overlaps: Vec<Vec<f64>>,
    pub max_offdiag_overlap: f64,
    pub purity: f64,
}

/// Run `n_steps` Trotter steps and report environment overlaps between the
/// states conditioned on each pair of probe positions.
pub fn evolve_explicit(
    model: &ExplicitModel,
    dt: f64,
    n_steps: usize,
    probes: &[f64],
) -> Result<(ExplicitModel, DecoherenceReport)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    let mut m = model.clone();
    m.evolve(dt, n_steps);
    let k = probes.len();
    let mut ov = vec![vec![0.0; k]; k];
    let mut worst: f64 = 0.0;
    for a in 0..k {
        for b in 0..k {
            ov[a][b] = m.env_overlap(probes[a], probes[b]);
            if a != b {
                worst = worst.max(ov[a][b]);
            }
        }
    }
    let purity = m.reduced_density()?.purity();
    let report = DecoherenceReport {
        t: m.time(),
        probes: probes.to_vec(),
        env_overlaps: ov,
        max_offdiag_overlap: worst,
        purity,
    };
    Ok((m, report))
}

/// Indicator projectors for `(−∞, e₀), [e₀, e₁), …, [e_last, ∞)`.
pub fn position_projectors(grid: &GridSpec, edges: &[f64]) -> Vec<Array2<C64>> {
    let n = grid.n();
    let bin = |x: f64| edges.iter().filter(|&&e| x >= e).count();
    (0..=edges.len())
        .map(|k| {
            let mut p = Array2::zeros((n, n));
            for i in 0..n {
                if bin(grid.x(i)) == k {
                    p[[i, i]] = C64::new(1.0, 0.0);
                }
            }
            p
        })
        .collect()
}

/// Decoherence functional and consistency ratios over a set of histories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryReport {
    pub histories: Vec<Vec<usize>>,
    /// `[a][b] = (re, im)` of `D(ᾱ_a, ᾱ_b)`.
    pub functional: Vec<Vec<(f64, f64)>>,
    /// `|D(a,b)| / √(D(a,a) D(b,b))`, with 0/0 → 0.
    pub ratios: Vec<Vec<f64>>,
    pub max_offdiag_ratio: f64,
}

pub const MAX_HISTORIES: usize = 64;
pub const MAX_HISTORY_STEPS: usize = 4;

/// `D(ᾱ, ᾱ') = ⟨C_ᾱ' Ψ₀ | C_ᾱ Ψ₀⟩` with
/// `C_ᾱ = P_{α_N} U(dt) ⋯ U(dt) P_{α_0}`, each `U(dt)` taken in `substeps`
/// Trotter steps.
pub fn decoherence_functional(
    model: &ExplicitModel,
    projectors: &[Array2<C64>],
    histories: &[Vec<usize>],
    dt: f64,
    substeps: usize,
) -> Result<HistoryReport> {
    if histories.len() > MAX_HISTORIES {
        return Err(Error::param("histories", format!("at most {MAX_HISTORIES}")));
    }
    let mut branches = Vec::with_capacity(histories.len());
    for h in histories {
        if h.is_empty() || h.len() > MAX_HISTORY_STEPS + 1 {
            return Err(Error::param("histories", "each history needs 1 to 5 entries"));
        }
        let mut m = model.clone();
        for (step, &a) in h.iter().enumerate() {
            if step > 0 {
                m.evolve(dt / substeps.max(1) as f64, substeps.max(1));
            }
            let p =
                projectors.get(a).ok_or_else(|| Error::param("histories", format!("projector {a} does not exist")))?;
            m = m.apply_system_operator(p)?;
        }
        branches.push(m);
    }
    let k = branches.len();
    let mut d = vec![vec![C64::new(0.0, 0.0); k]; k];
    for a in 0..k {
        for b in 0..k {
            d[a][b] = branches[b].inner(&branches[a]);
        }
    }
    let mut ratios = vec![vec![0.0; k]; k];
    let mut worst: f64 = 0.0;
    for a in 0..k {
        for b in 0..k {
            let den = (d[a][a].re * d[b][b].re).max(0.0).sqrt();
            ratios[a][b] = if den > 0.0 { d[a][b].norm() / den } else { 0.0 };
            if a != b {
                worst = worst.max(ratios[a][b]);
            }
        }
    }
    Ok(HistoryReport {
        histories: histories.to_vec(),
        functional: d.iter().map(|r| r.iter().map(|z| (z.re, z.im)).collect()).collect(),
        ratios,
        max_offdiag_ratio: worst,
    })
}

/// Bhattacharyya coefficient `Σ_config √(p_a p_b)` of two branches of the
/// same model; 0 means disjoint supports.
pub fn superorthogonality_overlap(a: &ExplicitModel, b: &ExplicitModel) -> Result<f64> {
    if a.grid() != b.grid() || a.env_dim() != b.env_dim() {
        return Err(Error::param("branches", "configuration spaces differ"));
    }
    let (pa, pb) = (a.configuration_probabilities(), b.configuration_probabilities());
    let (na, nb) = (pa.sum(), pb.sum());
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::param("branches", "zero-norm branch"));
    }
    Ok(pa.iter().zip(pb.iter()).map(|(x, y)| (x / na * y / nb).sqrt()).sum())
}
