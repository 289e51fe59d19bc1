//! Time evolution: split-operator Schrödinger stepping and the
//! Caldeira-Leggett master equation `i dρ/dt = [H, ρ] − iΛ[X,[X,ρ]]`.

mod potential;
mod propagator;

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub(crate) use potential::interpolate;
pub use potential::Potential;
pub use propagator::Propagator;

use crate::qstate::{DensityMatrix, Expectation, GridSpec, Observable, WaveFunction};
use crate::{Error, Result};

/// Strength of the environmental decoherence term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CLParams {
    pub lambda: f64,
}

impl CLParams {
    pub fn new(lambda: f64) -> Result<Self> {
        let p = CLParams { lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn closed() -> Self {
        CLParams { lambda: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::param("lambda", "must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    StrangSplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolverConfig {
    /// Largest internal substep.
    pub dt_int: f64,
    pub scheme: Scheme,
    /// Check the eigenvalue floor at every `positivity_every`-th record
    /// (0 disables the check).
    pub positivity_every: usize,
}

impl Default for EvolverConfig {
    fn default() -> Self {
        EvolverConfig { dt_int: 0.01, scheme: Scheme::StrangSplit, positivity_every: 1 }
    }
}

impl EvolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_int.is_finite() && self.dt_int > 0.0) {
            return Err(Error::param("dt_int", "must be finite and positive"));
        }
        Ok(())
    }

    /// Number of equal substeps (each ≤ `dt_int`) covering `interval`.
    pub fn substeps(&self, interval: f64) -> usize {
        ((interval / self.dt_int) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }
}

/// A system state that is either pure or mixed.
#[derive(Clone, Debug, PartialEq)]
pub enum QuantumState {
    Pure(WaveFunction),
    Mixed(DensityMatrix),
}

impl From<WaveFunction> for QuantumState {
    fn from(psi: WaveFunction) -> Self {
        QuantumState::Pure(psi)
    }
}

impl From<DensityMatrix> for QuantumState {
    fn from(rho: DensityMatrix) -> Self {
        QuantumState::Mixed(rho)
    }
}

impl QuantumState {
    pub fn grid(&self) -> &GridSpec {
        match self {
            QuantumState::Pure(p) => p.grid(),
            QuantumState::Mixed(r) => r.grid(),
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        match self {
            QuantumState::Pure(p) => DensityMatrix::pure(p),
            QuantumState::Mixed(r) => r.clone(),
        }
    }

    pub fn as_pure(&self) -> Option<&WaveFunction> {
        match self {
            QuantumState::Pure(p) => Some(p),
            QuantumState::Mixed(_) => None,
        }
    }

    pub fn as_mixed(&self) -> Option<&DensityMatrix> {
        match self {
            QuantumState::Pure(_) => None,
            QuantumState::Mixed(r) => Some(r),
        }
    }

    pub fn moments(&self, t: f64) -> Result<Moments> {
        let obs: &dyn Expectation = match self {
            QuantumState::Pure(p) => p,
            QuantumState::Mixed(r) => r,
        };
        let mean_x = obs.expectation(&Observable::X)?;
        let mean_p = obs.expectation(&Observable::P)?;
        let var_x = obs.expectation(&Observable::X2)? - mean_x * mean_x;
        let var_p = obs.expectation(&Observable::P2)? - mean_p * mean_p;
        let purity = match self {
            QuantumState::Pure(_) => 1.0,
            QuantumState::Mixed(r) => r.purity(),
        };
        Ok(Moments { t, mean_x, mean_p, var_x, var_p, s_lin: 1.0 - purity, purity })
    }
}

/// One row of a [`TimeSeries`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub t: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub s_lin: f64,
    pub purity: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub rows: Vec<Moments>,
}

impl TimeSeries {
    pub const CSV_HEADER: &'static str = "t,mean_x,mean_p,var_x,var_p,s_lin,purity";

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, f: impl Fn(&Moments) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{},{}", r.t, r.mean_x, r.mean_p, r.var_x, r.var_p, r.s_lin, r.purity);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub state: QuantumState,
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub final_state: QuantumState,
    pub series: TimeSeries,
    /// Recorded states, including `t = 0`, when requested.
    pub snapshots: Vec<Snapshot>,
    /// Smallest eigenvalue seen at checked record points.
    pub min_eigenvalue: Option<f64>,
}

/// One split-operator step of `exp(−iH dt)`.
pub fn unitary_step(psi: &WaveFunction, v: &Potential, dt: f64) -> Result<WaveFunction> {
    let prop = Propagator::new(psi.grid(), v, &CLParams::closed(), dt)?;
    let mut out = psi.clone();
    prop.advance_wave(&mut out, 1);
    Ok(out)
}

/// One Strang step of the Caldeira-Leggett equation.
pub fn cl_step(rho: &DensityMatrix, v: &Potential, cl: &CLParams, dt: f64) -> Result<DensityMatrix> {
    let prop = Propagator::new(rho.grid(), v, cl, dt)?;
    let mut out = rho.clone();
    prop.advance_density(&mut out, 1);
    Ok(out)
}

/// Evolve for `total_time`, recording moments every `record_every`.
///
/// Pure states stay pure when `Λ = 0` and are promoted to density matrices
/// otherwise. `total_time` must be an integer multiple of `record_every`.
pub fn evolve(
    state: QuantumState,
    v: &Potential,
    cl: &CLParams,
    cfg: &EvolverConfig,
    total_time: f64,
    record_every: f64,
    keep_snapshots: bool,
) -> Result<Evolution> {
    cfg.validate()?;
    cl.validate()?;
    if !(total_time.is_finite() && total_time >= 0.0) {
        return Err(Error::param("total_time", "must be finite and non-negative"));
    }
    let n_records = if total_time == 0.0 {
        0
    } else {
        if !(record_every.is_finite() && record_every > 0.0) {
            return Err(Error::param("record_every", "must be finite and positive"));
        }
        let r = (total_time / record_every).round();
        if r < 1.0 || (r * record_every - total_time).abs() > 1e-9 * total_time.max(1.0) {
            return Err(Error::param("record_every", "total_time must be an integer multiple of record_every"));
        }
        r as usize
    };
    let mut state = match state {
        QuantumState::Pure(p) if cl.lambda > 0.0 => QuantumState::Mixed(DensityMatrix::pure(&p)),
        s => s,
    };
    let grid = state.grid().clone();
    let record_dt = if n_records == 0 { 0.0 } else { total_time / n_records as f64 };
    let steps = if n_records == 0 { 0 } else { cfg.substeps(record_dt) };
    let prop = if n_records == 0 { None } else { Some(Propagator::new(&grid, v, cl, record_dt / steps as f64)?) };

    let mut series = TimeSeries::default();
    let mut snapshots = Vec::new();
    let mut min_eigenvalue: Option<f64> = None;
    for rec in 0..=n_records {
        let t = rec as f64 * record_dt;
        if rec > 0 {
            let prop = prop.as_ref().expect("propagator exists when recording");
            match &mut state {
                QuantumState::Pure(p) => prop.advance_wave(p, steps),
                QuantumState::Mixed(r) => prop.advance_density(r, steps),
            }
        }
        if let QuantumState::Mixed(r) = &state {
            if cfg.positivity_every > 0 && rec % cfg.positivity_every == 0 {
                let pos = r.check_positivity().map_err(|e| e.at(t))?;
                let m = match pos {
                    crate::qstate::Positivity::Ok { min_eigenvalue }
                    | crate::qstate::Positivity::Warning { min_eigenvalue } => min_eigenvalue,
                };
                min_eigenvalue = Some(min_eigenvalue.map_or(m, |v| v.min(m)));
            }
        }
        series.rows.push(state.moments(t).map_err(|e| e.at(t))?);
        if keep_snapshots {
            snapshots.push(Snapshot { t, state: state.clone() });
        }
    }
    Ok(Evolution { final_state: state, series, snapshots, min_eigenvalue })
}
