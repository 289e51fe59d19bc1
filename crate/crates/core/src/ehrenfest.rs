//! Open-system Ehrenfest checks, ensemble widths and the classicality horizon.
//!
//! Under the Caldeira-Leggett equation `d⟨P⟩/dt = −⟨V'(X)⟩` still holds: the
//! double commutator drops out of every first moment. Newton's law follows
//! only when the ensemble is narrow against the potential's length scale,
//! and the gap `|⟨V'⟩ − V'(⟨X⟩)|` measures how far it is from that.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::dynamics::{Evolution, Potential, QuantumState, Snapshot, TimeSeries};
use crate::qstate::fourier::{momentum_diagonal, spectral};
use crate::qstate::{DensityMatrix, Expectation, Observable};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub t: f64,
    /// Centred difference of `⟨P⟩`.
    pub dp_dt: f64,
    /// `⟨V'(X)⟩`.
    pub mean_force: f64,
    pub residual: f64,
    pub relative: f64,
    /// `|⟨V'⟩ − V'(⟨X⟩)|`.
    pub gap: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub rows: Vec<ResidualRow>,
    /// `max|⟨V'⟩|` over all snapshots; 0 when the force vanishes.
    pub force_scale: f64,
}

pub const RESIDUAL_CSV_HEADER: &str = "t,dp_dt,mean_force,residual,relative,gap";

impl ResidualSeries {
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    pub fn max_relative(&self) -> f64 {
        self.rows.iter().map(|r| r.relative).fold(0.0, f64::max)
    }

    pub fn max_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(RESIDUAL_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.t, r.dp_dt, r.mean_force, r.residual, r.relative, r.gap);
        }
        s
    }
}

fn expect(state: &QuantumState, obs: &Observable) -> Result<f64> {
    match state {
        QuantumState::Pure(p) => p.expectation(obs),
        QuantumState::Mixed(r) => r.expectation(obs),
    }
}

/// `|d⟨P⟩/dt + ⟨V'⟩|` at every interior snapshot.
///
/// The relative residual divides by `max|⟨V'⟩|`; when the force vanishes
/// identically it equals the raw residual.
pub fn ehrenfest_residual(snapshots: &[Snapshot], v: &Potential) -> Result<ResidualSeries> {
    if snapshots.len() < 3 {
        return Err(Error::param("snapshots", "need at least three for a centred difference"));
    }
    let h = snapshots[1].t - snapshots[0].t;
    if !(h > 0.0) || snapshots.windows(2).any(|w| ((w[1].t - w[0].t) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(Error::param("snapshots", "must be uniformly spaced in time"));
    }
    let grid = snapshots[0].state.grid().clone();
    let force = Observable::Diagonal(v.derivative_on(&grid));
    let mut p = Vec::with_capacity(snapshots.len());
    let mut f = Vec::with_capacity(snapshots.len());
    let mut x = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        p.push(expect(&s.state, &Observable::P).map_err(|e| e.at(s.t))?);
        f.push(expect(&s.state, &force).map_err(|e| e.at(s.t))?);
        x.push(expect(&s.state, &Observable::X).map_err(|e| e.at(s.t))?);
    }
    let scale = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let rows = (1..snapshots.len() - 1)
        .map(|k| {
            let dp_dt = (p[k + 1] - p[k - 1]) / (2.0 * h);
            let residual = (dp_dt + f[k]).abs();
            ResidualRow {
                t: snapshots[k].t,
                dp_dt,
                mean_force: f[k],
                residual,
                relative: if scale > 0.0 { residual / scale } else { residual },
                gap: (f[k] - v.derivative_at(x[k], &grid)).abs(),
            }
        })
        .collect();
    Ok(ResidualSeries { rows, force_scale: scale })
}

/// `Tr(P·[X,[X,ρ]])`, the decoherence term's contribution to `d⟨P⟩/dt`
/// (up to the factor `−Λ`).
pub fn decoherence_momentum_drift(rho: &DensityMatrix) -> Result<f64> {
    let g = rho.grid();
    let xs = g.positions();
    let e = rho.elements();
    let a = Array2::from_shape_fn(e.dim(), |(i, j)| e[[i, j]] * (xs[i] - xs[j]).powi(2));
    let d = momentum_diagonal(&spectral(g.n()), &a);
    let k = g.wavenumbers();
    let total: C64 = d.iter().zip(&k).map(|(z, k)| z * k).sum::<C64>() * g.dx();
    Ok(total.re)
}

/// Ensemble widths: standard deviations of the position and momentum
/// marginals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WidthSeries {
    pub times: Vec<f64>,
    pub delta_x: Vec<f64>,
    pub delta_p: Vec<f64>,
}

pub const WIDTH_CSV_HEADER: &str = "t,delta_x,delta_p";

fn std_of(values: &[f64], weights: &[f64]) -> f64 {
    let w: f64 = weights.iter().sum();
    let m: f64 = values.iter().zip(weights).map(|(v, p)| v * p).sum::<f64>() / w;
    let m2: f64 = values.iter().zip(weights).map(|(v, p)| v * v * p).sum::<f64>() / w;
    (m2 - m * m).max(0.0).sqrt()
}

impl WidthSeries {
    /// From the marginal distributions `⟨X|ρ|X⟩` and `⟨P|ρ|P⟩` of each snapshot.
    pub fn from_snapshots(snapshots: &[Snapshot]) -> Self {
        let mut out = WidthSeries::default();
        for s in snapshots {
            let g = s.state.grid();
            let (px, pp) = match &s.state {
                QuantumState::Pure(p) => (p.density(), p.momentum_probabilities()),
                QuantumState::Mixed(r) => (r.position_density(), r.momentum_probabilities()),
            };
            out.times.push(s.t);
            out.delta_x.push(std_of(&g.positions(), &px));
            out.delta_p.push(std_of(&g.wavenumbers(), &pp));
        }
        out
    }

    /// From the operator moments already recorded in a series.
    pub fn from_series(series: &TimeSeries) -> Self {
        WidthSeries {
            times: series.times(),
            delta_x: series.column(|m| m.var_x.max(0.0).sqrt()),
            delta_p: series.column(|m| m.var_p.max(0.0).sqrt()),
        }
    }

    pub fn from_evolution(ev: &Evolution) -> Self {
        if ev.snapshots.is_empty() {
            Self::from_series(&ev.series)
        } else {
            Self::from_snapshots(&ev.snapshots)
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(WIDTH_CSV_HEADER);
        s.push('\n');
        for i in 0..self.times.len() {
            let _ = writeln!(s, "{},{},{}", self.times[i], self.delta_x[i], self.delta_p[i]);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthComponent {
    DeltaX,
    DeltaP,
}

/// First time the widths leave `(min(2δ_X, l_V), 2δ_P)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    /// `None` when the bound held for the whole run.
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub violated_component: Option<WidthComponent>,
}

impl Horizon {
    /// `+∞` when never violated.
    pub fn value(&self) -> f64 {
        self.t.unwrap_or(f64::INFINITY)
    }
}

pub fn classicality_horizon(widths: &WidthSeries, delta_z: (f64, f64), l_v: f64) -> Result<Horizon> {
    let (dx, dp) = delta_z;
    if !(dx > 0.0 && dp > 0.0) || l_v.is_nan() || l_v <= 0.0 {
        return Err(Error::param("delta_z", "margins and l_V must be positive"));
    }
    if widths.times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("widths", "times must increase"));
    }
    let bx = (2.0 * dx).min(l_v);
    let bp = 2.0 * dp;
    for i in 0..widths.times.len() {
        let c = if widths.delta_x[i] > bx {
            Some(WidthComponent::DeltaX)
        } else if widths.delta_p[i] > bp {
            Some(WidthComponent::DeltaP)
        } else {
            None
        };
        if c.is_some() {
            return Ok(Horizon { t: Some(widths.times[i]), violated_component: c });
        }
    }
    Ok(Horizon { t: None, violated_component: None })
}
