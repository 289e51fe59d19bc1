use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::PhasePartition;
use crate::linalg::{adjoint, frobenius, hermitian_eigenvalues, identity, psd_sqrt, trace_product};
use crate::qstate::{coherent_amplitudes, DensityMatrix, GridSpec, PhasePoint};
use crate::{Error, Result, C64};

/// `‖Π_rest|probe⟩‖` above which the window is declared too small.
pub const WINDOW_PROBE_TOL: f64 = 0.1;
/// Distance, in packet widths, the window must keep from the grid edges.
pub const WINDOW_MARGIN_SIGMAS: f64 = 4.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    #[default]
    Midpoint,
    GaussLegendre,
}

/// Subsamples per cell along each axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quadrature {
    pub n_q: usize,
    pub n_p: usize,
    pub rule: QuadratureRule,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature { n_q: 4, n_p: 4, rule: QuadratureRule::Midpoint }
    }
}

impl Quadrature {
    pub fn new(n_q: usize, n_p: usize, rule: QuadratureRule) -> Self {
        Quadrature { n_q, n_p, rule }
    }

    /// Nodes and weights on `[0, 1]`.
    fn nodes(&self, n: usize) -> Vec<(f64, f64)> {
        match self.rule {
            QuadratureRule::Midpoint => (0..n).map(|i| ((i as f64 + 0.5) / n as f64, 1.0 / n as f64)).collect(),
            QuadratureRule::GaussLegendre => gauss_legendre(n),
        }
    }
}

/// Golub-Welsch: nodes are the eigenvalues of the Jacobi matrix.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let j = DMatrix::from_fn(n, n, |a, b| {
        if a.abs_diff(b) == 1 {
            let k = a.max(b) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = j.symmetric_eigen();
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (0.5 * (eig.eigenvalues[i] + 1.0), v0 * v0)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// One POVM element `Π_α = V V†`, kept in factored form.
#[derive(Clone, Debug)]
pub struct PovmElement {
    /// `n × r`, columns `√(w_k/2π)·|Z_k⟩` in the orthonormal grid basis.
    pub factor: Array2<C64>,
    /// `V†V`.
    pub gram: Array2<C64>,
}

impl PovmElement {
    pub fn operator(&self) -> Array2<C64> {
        self.factor.dot(&adjoint(self.factor.view()))
    }

    /// `V†RV` for an operator `R`.
    fn compress(&self, r: &Array2<C64>) -> Array2<C64> {
        adjoint(self.factor.view()).dot(&r.dot(&self.factor))
    }

    fn norm(&self) -> f64 {
        hermitian_eigenvalues(self.gram.view()).last().copied().unwrap_or(0.0)
    }
}

/// Coherent-state POVM on a phase-space partition plus the escape element
/// `Π_rest = I − Σ_α Π_α`.
#[derive(Clone, Debug)]
pub struct POVMSet {
    grid: GridSpec,
    partition: PhasePartition,
    sigma_x: f64,
    quadrature: Quadrature,
    elements: Vec<PovmElement>,
    rest: Array2<C64>,
    rest_sq: Array2<C64>,
    rest_min_eigenvalue: f64,
}

/// Result of projecting a state onto the POVM.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchWeights {
    /// `Tr(Π_α² ρ)` per cell.
    pub cells: Vec<f64>,
    /// `Tr(Π_rest² ρ)`.
    pub rest: f64,
}

impl BranchWeights {
    pub fn total(&self) -> f64 {
        self.cells.iter().sum::<f64>() + self.rest
    }
}

pub fn build_povm(
    grid: &GridSpec,
    partition: &PhasePartition,
    sigma_x: f64,
    quadrature: Quadrature,
) -> Result<POVMSet> {
    if !(sigma_x.is_finite() && sigma_x > 0.0) {
        return Err(Error::param("sigma_x", "must be positive"));
    }
    if quadrature.n_q < 2 || quadrature.n_p < 2 {
        return Err(Error::param("quadrature", "need at least 2×2 subsamples per cell"));
    }
    let sigma_p = 0.5 / sigma_x;
    let (xa, xb) = partition.x_window();
    let (pa, pb) = partition.p_window();
    let mx = WINDOW_MARGIN_SIGMAS * sigma_x;
    let mp = WINDOW_MARGIN_SIGMAS * sigma_p;
    if xa - mx < grid.x_min() || xb + mx > grid.x_max() {
        return Err(Error::WindowTooSmall(format!(
            "x window [{xa}, {xb}] needs {mx} clearance inside grid [{}, {}]",
            grid.x_min(),
            grid.x_max()
        )));
    }
    if pa - mp < -grid.p_max() || pb + mp > grid.p_max() {
        return Err(Error::WindowTooSmall(format!(
            "p window [{pa}, {pb}] needs {mp} clearance inside ±{}",
            grid.p_max()
        )));
    }

    let n = grid.n();
    let sqrt_dx = grid.dx().sqrt();
    let qn = quadrature.nodes(quadrature.n_q);
    let pn = quadrature.nodes(quadrature.n_p);
    let r = qn.len() * pn.len();
    let area = partition.d_x() * partition.d_p();
    let mut elements = Vec::with_capacity(partition.len());
    let mut rest = identity(n);
    for cell in partition.cells() {
        let mut factor = Array2::zeros((n, r));
        let mut col = 0;
        for &(uq, wq) in &qn {
            for &(up, wp) in &pn {
                let z = PhasePoint::new(cell.x.0 + uq * partition.d_x(), cell.p.0 + up * partition.d_p());
                let scale = (wq * wp * area / (2.0 * std::f64::consts::PI)).sqrt() * sqrt_dx;
                let amps = coherent_amplitudes(grid, z, sigma_x);
                for (i, a) in amps.into_iter().enumerate() {
                    factor[[i, col]] = a * scale;
                }
                col += 1;
            }
        }
        let gram = adjoint(factor.view()).dot(&factor);
        let el = PovmElement { factor, gram };
        rest -= &el.operator();
        elements.push(el);
    }
    let rest_sq = rest.dot(&rest);
    let rest_min_eigenvalue = hermitian_eigenvalues(rest.view())[0];
    let povm = POVMSet {
        grid: grid.clone(),
        partition: partition.clone(),
        sigma_x,
        quadrature,
        elements,
        rest,
        rest_sq,
        rest_min_eigenvalue,
    };
    let leak = povm.rest_probe_norm(partition.window_center());
    if leak > WINDOW_PROBE_TOL {
        return Err(Error::WindowTooSmall(format!(
            "‖Π_rest|probe⟩‖ = {leak:.3} at the window centre exceeds {WINDOW_PROBE_TOL}"
        )));
    }
    Ok(povm)
}

impl POVMSet {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn partition(&self) -> &PhasePartition {
        &self.partition
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, alpha: usize) -> &PovmElement {
        &self.elements[alpha]
    }

    /// Dense `Π_α` in the orthonormal grid basis.
    pub fn operator(&self, alpha: usize) -> Array2<C64> {
        self.elements[alpha].operator()
    }

    pub fn rest(&self) -> &Array2<C64> {
        &self.rest
    }

    /// Smallest eigenvalue of `Π_rest`; slightly negative values are the
    /// price of keeping the completeness identity exact.
    pub fn rest_min_eigenvalue(&self) -> f64 {
        self.rest_min_eigenvalue
    }

    /// `‖Π_rest|Z⟩‖` for the coherent state at `z`.
    pub fn rest_probe_norm(&self, z: PhasePoint) -> f64 {
        let sqrt_dx = self.grid.dx().sqrt();
        let v: Vec<C64> = coherent_amplitudes(&self.grid, z, self.sigma_x).into_iter().map(|a| a * sqrt_dx).collect();
        let v = ndarray::Array1::from(v);
        self.rest.dot(&v).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `Tr(Π_α ρ)` per cell and for the remainder.
    pub fn probabilities(&self, rho: &DensityMatrix) -> (Vec<f64>, f64) {
        let r = rho.operator();
        let cells: Vec<f64> = self
            .elements
            .iter()
            .map(|e| {
                let rv = r.dot(&e.factor);
                trace_product(adjoint(e.factor.view()).view(), rv.view()).re
            })
            .collect();
        let rest = trace_product(self.rest.view(), r.view()).re;
        (cells, rest)
    }

    /// Lüders weights `Tr(Π_α² ρ)` and `Tr(Π_rest² ρ)`.
    pub fn branch_weights(&self, rho: &DensityMatrix) -> BranchWeights {
        let r = rho.operator();
        let cells = self.elements.iter().map(|e| trace_product(e.gram.view(), e.compress(&r).view()).re).collect();
        let rest = trace_product(self.rest_sq.view(), r.view()).re;
        BranchWeights { cells, rest }
    }

    /// `Π_α ρ Π_α`, renormalised, together with its trace before
    /// renormalisation.
    pub fn project(&self, alpha: usize, rho: &DensityMatrix) -> Result<(DensityMatrix, f64)> {
        let e = &self.elements[alpha];
        let m = e.compress(&rho.operator());
        let out = e.factor.dot(&m).dot(&adjoint(e.factor.view()));
        let tr: f64 = out.diag().iter().map(|z| z.re).sum();
        if !(tr > 0.0) {
            return Err(Error::param("alpha", format!("cell {alpha} has no weight")));
        }
        let mut d = DensityMatrix::from_operator(self.grid.clone(), out.mapv(|z| z / tr))?;
        d.hermitize();
        Ok((d, tr))
    }

    /// `‖Π_α‖` (largest eigenvalue).
    pub fn norm(&self, alpha: usize) -> f64 {
        self.elements[alpha].norm()
    }

    /// `‖Π_α² − Π_α‖ / ‖Π_α‖`. Both are functions of the eigenvalues `g` of
    /// the Gram matrix: `max|g² − g| / max g`.
    pub fn diagonal_defect(&self, alpha: usize) -> f64 {
        let g = hermitian_eigenvalues(self.elements[alpha].gram.view());
        let top = g.last().copied().unwrap_or(0.0);
        let d = g.iter().map(|&v| (v * v - v).abs()).fold(0.0, f64::max);
        d / top
    }

    /// `‖Π_α Π_β‖ / ‖Π_α‖`, via the `r × r` problem
    /// `λ_max(G_β^{½} S† G_α S G_β^{½})` with `S = V_α†V_β`.
    pub fn overlap_ratio(&self, alpha: usize, beta: usize) -> f64 {
        let (a, b) = (&self.elements[alpha], &self.elements[beta]);
        let s = adjoint(a.factor.view()).dot(&b.factor);
        let gb = psd_sqrt(b.gram.view());
        let m = gb.dot(&adjoint(s.view())).dot(&a.gram).dot(&s).dot(&gb);
        let top = hermitian_eigenvalues(m.view()).last().copied().unwrap_or(0.0);
        top.max(0.0).sqrt() / a.norm()
    }
}

/// How close the POVM is to a projection-valued measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PvmQuality {
    /// `‖Σ_α Π_α + Π_rest − I‖_F`.
    pub completeness_residual: f64,
    /// `[α][β] = ‖Π_αΠ_β − δ_αβ Π_α‖ / ‖Π_α‖`.
    pub orthogonality_matrix: Vec<Vec<f64>>,
    /// Largest off-diagonal entry over pairs of non-adjacent cells.
    pub worst_offdiag: f64,
    /// Largest off-diagonal entry over pairs that share an edge or corner.
    pub worst_adjacent: f64,
    /// Largest diagonal entry.
    pub worst_defect: f64,
    pub rest_min_eigenvalue: f64,
}

impl PvmQuality {
    pub fn is_approximate_pvm(&self, offdiag_tol: f64, defect_tol: f64) -> bool {
        self.worst_offdiag < offdiag_tol && self.worst_defect < defect_tol
    }
}

pub fn pvm_quality(povm: &POVMSet) -> PvmQuality {
    let n = povm.grid.n();
    let mut sum = povm.rest.clone();
    for e in &povm.elements {
        sum += &e.operator();
    }
    sum -= &identity(n);
    let completeness_residual = frobenius(sum.view());

    let k = povm.len();
    let part = &povm.partition;
    let mut m = vec![vec![0.0; k]; k];
    let (mut worst_offdiag, mut worst_adjacent, mut worst_defect) = (0.0f64, 0.0f64, 0.0f64);
    for (a, row) in m.iter_mut().enumerate() {
        for (b, entry) in row.iter_mut().enumerate() {
            if a == b {
                *entry = povm.diagonal_defect(a);
                worst_defect = worst_defect.max(*entry);
            } else {
                *entry = povm.overlap_ratio(a, b);
                if part.adjacent(a, b) {
                    worst_adjacent = worst_adjacent.max(*entry);
                } else {
                    worst_offdiag = worst_offdiag.max(*entry);
                }
            }
        }
    }
    PvmQuality {
        completeness_residual,
        orthogonality_matrix: m,
        worst_offdiag,
        worst_adjacent,
        worst_defect,
        rest_min_eigenvalue: povm.rest_min_eigenvalue,
    }
}

/// Operator-norm distance between two POVMs on the same partition, relative
/// to `‖Π_α‖` of the first, per cell.
pub fn relative_change(a: &POVMSet, b: &POVMSet) -> Vec<f64> {
    (0..a.len())
        .map(|i| {
            let d = a.operator(i) - b.operator(i);
            let ev = hermitian_eigenvalues(d.view());
            let top = ev[0].abs().max(ev[ev.len() - 1].abs());
            top / a.norm(i)
        })
        .collect()
}
