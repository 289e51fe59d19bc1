use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;

use crate::branching::ExplicitModel;
use crate::dynamics::{interpolate, CLParams, EvolverConfig, Potential, Propagator};
use crate::qstate::fourier::{derivative, spectral};
use crate::qstate::{GridSpec, WaveFunction};
use crate::rng::stream;
use crate::stats::ks_distance;
use crate::{Error, Result, C64};

/// Density below which the guidance law is not evaluated.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Flux `j = Im(ψ*∂ψ)/M` and density `|ψ|²` on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    grid: GridSpec,
    flux: Vec<f64>,
    density: Vec<f64>,
}

impl VelocityField {
    fn from_components<'a>(grid: &GridSpec, comps: impl Iterator<Item = &'a [C64]>) -> Self {
        let sp = spectral(grid.n());
        let k = grid.wavenumbers();
        let m = grid.mass();
        let mut flux = vec![0.0; grid.n()];
        let mut density = vec![0.0; grid.n()];
        for c in comps {
            let d = derivative(&sp, c, &k);
            for i in 0..grid.n() {
                flux[i] += (c[i].conj() * d[i]).im / m;
                density[i] += c[i].norm_sqr();
            }
        }
        VelocityField { grid: grid.clone(), flux, density }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// `v(x) = j(x)/ρ(x)`, both interpolated linearly between nodes.
    pub fn velocity(&self, x: f64) -> Result<f64> {
        let rho = interpolate(&self.density, x, &self.grid);
        if rho < DENSITY_FLOOR {
            return Err(Error::NodeRegion { x, density: rho });
        }
        Ok(interpolate(&self.flux, x, &self.grid) / rho)
    }

    fn lerp(&self, other: &VelocityField, f: f64, x: f64) -> Result<f64> {
        let g = &self.grid;
        let rho = (1.0 - f) * interpolate(&self.density, x, g) + f * interpolate(&other.density, x, g);
        if rho < DENSITY_FLOOR {
            return Err(Error::NodeRegion { x, density: rho });
        }
        let j = (1.0 - f) * interpolate(&self.flux, x, g) + f * interpolate(&other.flux, x, g);
        Ok(j / rho)
    }
}

/// States that can guide a system coordinate.
pub trait GuidingState {
    fn velocity_field(&self) -> VelocityField;
}

impl GuidingState for WaveFunction {
    fn velocity_field(&self) -> VelocityField {
        VelocityField::from_components(self.grid(), std::iter::once(self.amplitudes()))
    }
}

/// Numerator and denominator are summed over environment basis states.
impl GuidingState for ExplicitModel {
    fn velocity_field(&self) -> VelocityField {
        let s = self.state();
        let rows: Vec<Vec<C64>> = s.rows().into_iter().map(|r| r.to_vec()).collect();
        VelocityField::from_components(self.grid(), rows.iter().map(|r| r.as_slice()))
    }
}

pub fn bohm_velocity<S: GuidingState>(state: &S, x: f64) -> Result<f64> {
    state.velocity_field().velocity(x)
}

/// Guidance fields at uniformly spaced times, optionally with the densities
/// of separately evolved branch components.
#[derive(Clone, Debug)]
pub struct GuidanceTable {
    dt: f64,
    fields: Vec<VelocityField>,
    branches: Vec<Vec<Vec<f64>>>,
}

impl GuidanceTable {
    pub fn new(dt: f64, fields: Vec<VelocityField>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", "must be finite and positive"));
        }
        if fields.is_empty() {
            return Err(Error::param("fields", "need at least one snapshot"));
        }
        Ok(GuidanceTable { dt, fields, branches: Vec::new() })
    }

    /// Evolve `Σ components` unitarily, recording every `record_every`.
    ///
    /// With more than one component each is evolved on its own as well, so
    /// branch occupancy can be read off later.
    pub fn from_wave_run(
        components: &[WaveFunction],
        v: &Potential,
        total_time: f64,
        record_every: f64,
        cfg: &EvolverConfig,
    ) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::param("components", "empty"))?;
        if components.iter().any(|c| c.grid() != first.grid()) {
            return Err(Error::InvalidGrid("components live on different grids".into()));
        }
        let n_rec = records(total_time, record_every)?;
        let steps = cfg.substeps(record_every);
        let prop = Propagator::new(first.grid(), v, &CLParams::closed(), record_every / steps as f64)?;
        let mut parts: Vec<WaveFunction> = components.to_vec();
        let mut fields = Vec::with_capacity(n_rec + 1);
        let mut branches = vec![Vec::with_capacity(n_rec + 1); if parts.len() > 1 { parts.len() } else { 0 }];
        for rec in 0..=n_rec {
            if rec > 0 {
                parts.par_iter_mut().for_each(|p| prop.advance_wave(p, steps));
            }
            let total: Vec<C64> =
                (0..first.grid().n()).map(|i| parts.iter().map(|p| p.amplitudes()[i]).sum()).collect();
            fields.push(VelocityField::from_components(first.grid(), std::iter::once(total.as_slice())));
            for (b, p) in branches.iter_mut().zip(&parts) {
                b.push(p.density());
            }
        }
        Ok(GuidanceTable { dt: record_every, fields, branches })
    }

    /// Record an explicit-model run every `substeps` model steps of `dt`.
    pub fn from_explicit_run(model: &ExplicitModel, dt: f64, substeps: usize, n_records: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::param("substeps", "must be at least 1"));
        }
        let mut m = model.clone();
        let mut fields = vec![m.velocity_field()];
        for _ in 0..n_records {
            m.evolve(dt, substeps);
            fields.push(m.velocity_field());
        }
        Self::new(dt * substeps as f64, fields)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.fields.len() - 1) as f64 * self.dt
    }

    pub fn field(&self, k: usize) -> &VelocityField {
        &self.fields[k]
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    /// Velocity at `(t, x)`, with flux and density interpolated in time.
    pub fn velocity(&self, t: f64, x: f64) -> Result<f64> {
        let s = (t / self.dt).clamp(0.0, (self.fields.len() - 1) as f64);
        let k = (s.floor() as usize).min(self.fields.len().saturating_sub(2));
        if self.fields.len() == 1 {
            return self.fields[0].velocity(x);
        }
        self.fields[k].lerp(&self.fields[k + 1], s - k as f64, x)
    }

    /// Bhattacharyya overlap of the branch densities at record `k`, worst pair.
    fn branch_overlap(&self, k: usize) -> f64 {
        let dx = self.fields[0].grid.dx();
        let mut worst: f64 = 0.0;
        for a in 0..self.branches.len() {
            for b in a + 1..self.branches.len() {
                let (ra, rb) = (&self.branches[a][k], &self.branches[b][k]);
                let na: f64 = ra.iter().sum::<f64>() * dx;
                let nb: f64 = rb.iter().sum::<f64>() * dx;
                let s: f64 = ra.iter().zip(rb).map(|(x, y)| (x * y).sqrt()).sum::<f64>() * dx;
                worst = worst.max(s / (na * nb).sqrt());
            }
        }
        worst
    }

    fn branch_at(&self, k: usize, x: f64) -> usize {
        let g = &self.fields[0].grid;
        (0..self.branches.len())
            .max_by(|&a, &b| {
                interpolate(&self.branches[a][k], x, g).total_cmp(&interpolate(&self.branches[b][k], x, g))
            })
            .unwrap_or(0)
    }
}

fn records(total_time: f64, record_every: f64) -> Result<usize> {
    if !(record_every.is_finite() && record_every > 0.0) {
        return Err(Error::param("record_every", "must be finite and positive"));
    }
    if !(total_time.is_finite() && total_time >= 0.0) {
        return Err(Error::param("total_time", "must be finite and non-negative"));
    }
    let r = (total_time / record_every).round();
    if (r * record_every - total_time).abs() > 1e-9 * total_time.max(1.0) {
        return Err(Error::param("record_every", "total_time must be an integer multiple of record_every"));
    }
    Ok(r as usize)
}

/// Positions in quantum equilibrium with `|ψ|²`.
#[derive(Clone, Debug, PartialEq)]
pub struct BohmEnsemble {
    pub positions: Vec<f64>,
    pub seed: u64,
}

impl BohmEnsemble {
    /// Draw `n` points from the piecewise-linear interpolant of the density.
    pub fn sample(field: &VelocityField, n: usize, seed: u64) -> Result<Self> {
        let cdf = PiecewiseLinear::new(field.grid(), field.density())?;
        let mut rng = stream(seed, 0);
        let positions = (0..n).map(|_| cdf.inverse(rng.random())).collect();
        Ok(BohmEnsemble { positions, seed })
    }
}

/// Cumulative distribution of a density interpolated linearly on a periodic grid.
struct PiecewiseLinear {
    x0: f64,
    dx: f64,
    rho: Vec<f64>,
    cum: Vec<f64>,
}

impl PiecewiseLinear {
    fn new(grid: &GridSpec, density: &[f64]) -> Result<Self> {
        let n = density.len();
        let dx = grid.dx();
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for i in 0..n {
            let next = density[(i + 1) % n];
            cum.push(cum[i] + 0.5 * (density[i] + next) * dx);
        }
        let total = cum[n];
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::param("density", "has no mass"));
        }
        let rho = density.iter().map(|r| r / total).collect();
        cum.iter_mut().for_each(|c| *c /= total);
        Ok(PiecewiseLinear { x0: grid.x_min(), dx, rho, cum })
    }

    fn cdf(&self, x: f64) -> f64 {
        let n = self.rho.len();
        let s = ((x - self.x0) / self.dx).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n - 1);
        let f = s - i as f64;
        let (a, b) = (self.rho[i], self.rho[(i + 1) % n]);
        self.cum[i] + self.dx * (a * f + 0.5 * (b - a) * f * f)
    }

    fn inverse(&self, u: f64) -> f64 {
        let n = self.rho.len();
        let i = self.cum.partition_point(|&c| c <= u).saturating_sub(1).min(n - 1);
        let (a, b) = (self.rho[i], self.rho[(i + 1) % n]);
        // Solve a·f + ½(b−a)f² = (u − cum_i)/dx for f ∈ [0, 1].
        let r = (u - self.cum[i]) / self.dx;
        let f = if (b - a).abs() < 1e-14 * a.max(b).max(1e-300) {
            if a > 0.0 {
                r / a
            } else {
                0.5
            }
        } else {
            let c = b - a;
            (-a + (a * a + 2.0 * c * r).max(0.0).sqrt()) / c
        };
        self.x0 + (i as f64 + f.clamp(0.0, 1.0)) * self.dx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: f64,
    pub ks_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BohmRun {
    /// Record times shared by `paths`.
    pub times: Vec<f64>,
    /// `paths[traj][record]`.
    pub paths: Vec<Vec<f64>>,
    /// Time at which a trajectory hit a node, if it did.
    pub node_flags: Vec<Option<f64>>,
    pub checkpoints: Vec<Checkpoint>,
    /// Adjacent pairs that swapped order, over all records.
    pub ordering_violations: usize,
    pub branches: Option<BranchOccupancy>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchOccupancy {
    /// First record time with worst branch overlap below the threshold.
    pub disjoint_from: Option<f64>,
    /// Fraction of trajectories in each branch at the last record.
    pub fractions: Vec<f64>,
    /// Branch changes after `disjoint_from`, summed over trajectories.
    pub crossings: usize,
}

/// Overlap below which branches count as disjoint.
pub const DISJOINT_OVERLAP: f64 = 1e-4;

pub const BOHM_CSV_HEADER: &str = "traj_id,t,q";

impl BohmRun {
    pub fn max_ks(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.ks_distance).fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> usize {
        self.node_flags.iter().filter(|f| f.is_some()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(BOHM_CSV_HEADER);
        s.push('\n');
        for (id, p) in self.paths.iter().enumerate() {
            for (t, q) in self.times.iter().zip(p) {
                let _ = writeln!(s, "{id},{t},{q}");
            }
        }
        s
    }

    pub fn stats_json(&self) -> serde_json::Value {
        serde_json::json!({
            "checkpoints": self.checkpoints,
            "max_ks": self.max_ks(),
            "node_flagged": self.flagged(),
            "ordering_violations": self.ordering_violations,
            "branches": self.branches,
        })
    }
}

/// Integrate every position with the explicit midpoint rule.
///
/// Positions are recorded at the table's snapshot times; the KS distance
/// against the interpolated density is taken every `checkpoint_every`
/// records. Trajectories that reach a node are flagged and frozen.
pub fn bohm_evolve(
    ensemble: &BohmEnsemble,
    table: &GuidanceTable,
    ode_dt: f64,
    checkpoint_every: usize,
) -> Result<BohmRun> {
    if !(ode_dt.is_finite() && ode_dt > 0.0) {
        return Err(Error::param("ode_dt", "must be finite and positive"));
    }
    if checkpoint_every == 0 {
        return Err(Error::param("checkpoint_every", "must be at least 1"));
    }
    let n_rec = table.len();
    let per_rec = (table.dt() / ode_dt).round().max(1.0) as usize;
    let h = table.dt() / per_rec as f64;
    let times: Vec<f64> = (0..n_rec).map(|k| k as f64 * table.dt()).collect();

    let results: Vec<(Vec<f64>, Option<f64>)> = ensemble
        .positions
        .par_iter()
        .map(|&q0| {
            let mut path = Vec::with_capacity(n_rec);
            path.push(q0);
            let mut q = q0;
            let mut flag = None;
            'outer: for rec in 1..n_rec {
                for s in 0..per_rec {
                    let t = (rec - 1) as f64 * table.dt() + s as f64 * h;
                    let step = table.velocity(t, q).and_then(|k1| table.velocity(t + 0.5 * h, q + 0.5 * h * k1));
                    match step {
                        Ok(k2) => q += h * k2,
                        Err(_) => {
                            log::warn!("trajectory from {q0} stopped at a node, t = {t}");
                            flag = Some(t);
                            for _ in rec..n_rec {
                                path.push(q);
                            }
                            break 'outer;
                        }
                    }
                }
                path.push(q);
            }
            (path, flag)
        })
        .collect();
    let (paths, node_flags): (Vec<Vec<f64>>, Vec<Option<f64>>) = results.into_iter().unzip();

    let mut checkpoints = Vec::new();
    for k in (0..n_rec).step_by(checkpoint_every).chain(std::iter::once(n_rec - 1)) {
        if checkpoints.last().is_some_and(|c: &Checkpoint| c.t == times[k]) {
            continue;
        }
        let field = table.field(k);
        let cdf = PiecewiseLinear::new(field.grid(), field.density())?;
        let span = field.grid().length();
        let x0 = field.grid().x_min();
        let sample: Vec<f64> = paths
            .iter()
            .zip(&node_flags)
            .filter(|(_, f)| f.is_none())
            .map(|(p, _)| x0 + (p[k] - x0).rem_euclid(span))
            .collect();
        checkpoints.push(Checkpoint { t: times[k], ks_distance: ks_distance(&sample, |x| cdf.cdf(x)) });
    }

    let mut order: Vec<usize> = (0..paths.len()).collect();
    order.sort_by(|&a, &b| paths[a][0].total_cmp(&paths[b][0]));
    let ordering_violations =
        (1..n_rec).map(|k| order.windows(2).filter(|w| paths[w[0]][k] > paths[w[1]][k]).count()).sum();

    let branches = (table.n_branches() > 1).then(|| {
        let disjoint = (0..n_rec).find(|&k| table.branch_overlap(k) < DISJOINT_OVERLAP);
        let mut fractions = vec![0.0; table.n_branches()];
        let mut crossings = 0;
        for p in &paths {
            fractions[table.branch_at(n_rec - 1, p[n_rec - 1])] += 1.0 / paths.len() as f64;
            if let Some(k0) = disjoint {
                let mut last = table.branch_at(k0, p[k0]);
                for (k, &q) in p.iter().enumerate().skip(k0 + 1) {
                    let b = table.branch_at(k, q);
                    if b != last {
                        crossings += 1;
                        last = b;
                    }
                }
            }
        }
        BranchOccupancy { disjoint_from: disjoint.map(|k| times[k]), fractions, crossings }
    });

    Ok(BohmRun { times, paths, node_flags, checkpoints, ordering_violations, branches })
}
