//! Phase-space partitions, coherent-state POVMs and the predictability sieve.

mod partition;
mod povm;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub use partition::{Cell, PhasePartition};
pub use povm::{
    build_povm, pvm_quality, relative_change, BranchWeights, POVMSet, PovmElement, PvmQuality, Quadrature,
    QuadratureRule, WINDOW_MARGIN_SIGMAS, WINDOW_PROBE_TOL,
};

use crate::dynamics::{evolve, CLParams, EvolverConfig, Potential};
use crate::qstate::{coherent_state, GridSpec, PhasePoint};
use crate::{Error, Result};

/// Linear-entropy curves for a scan of initial packet widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SieveResult {
    pub widths: Vec<f64>,
    pub times: Vec<f64>,
    /// `curves[i][j] = S_L(times[j])` for `widths[i]`.
    pub curves: Vec<Vec<f64>>,
    /// Width with the smallest `S_L` at the horizon.
    pub argmin_width: f64,
}

impl SieveResult {
    pub const CSV_HEADER: &'static str = "width,t,s_lin";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for (w, curve) in self.widths.iter().zip(&self.curves) {
            for (t, v) in self.times.iter().zip(curve) {
                let _ = writeln!(s, "{w},{t},{v}");
            }
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({ "argmin_width": self.argmin_width })
    }
}

/// Evolve a pure Gaussian at `z0` for each width and rank the widths by
/// linear entropy at `horizon`.
#[allow(clippy::too_many_arguments)]
pub fn predictability_sieve(
    grid: &GridSpec,
    v: &Potential,
    cl: &CLParams,
    sigma_list: &[f64],
    z0: PhasePoint,
    horizon: f64,
    record_every: f64,
    cfg: &EvolverConfig,
) -> Result<SieveResult> {
    if !v.is_linear_force() {
        return Err(Error::param("potential", "the sieve supports free and harmonic potentials"));
    }
    if sigma_list.is_empty() {
        return Err(Error::param("sigma_list", "no widths to scan"));
    }
    let runs: Vec<Result<(Vec<f64>, Vec<f64>)>> = sigma_list
        .par_iter()
        .map(|&s| {
            let psi = coherent_state(grid, z0, s)?;
            let ev = evolve(psi.into(), v, cl, cfg, horizon, record_every, false)?;
            Ok((ev.series.times(), ev.series.column(|r| r.s_lin.max(0.0))))
        })
        .collect();
    let mut times = Vec::new();
    let mut curves = Vec::with_capacity(runs.len());
    for r in runs {
        let (t, c) = r?;
        times = t;
        curves.push(c);
    }
    let best = curves
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.last().unwrap().total_cmp(b.1.last().unwrap()))
        .map(|(i, _)| i)
        .expect("non-empty scan");
    Ok(SieveResult { widths: sigma_list.to_vec(), times, curves, argmin_width: sigma_list[best] })
}
