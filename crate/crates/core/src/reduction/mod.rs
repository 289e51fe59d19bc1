//! The classical comparison model and an empirical check that sampled
//! quantum trajectories track it.
//!
//! A spec passes when, for every initial point `Z₀`, at least `1 − ε` of the
//! sampled trajectories stay within `2δ` of the Newtonian orbit (componentwise)
//! at every collapse time before `τ_c`. Whole-path failure counting is used:
//! one excursion fails the trajectory.

mod classical;

pub use classical::{classical_evolve, ClassicalTrajectory};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::Arc;

use crate::branching::{readout, Outcome, Sampler};
use crate::dynamics::{evolve, CLParams, EvolverConfig, Potential, QuantumState};
use crate::ehrenfest::{classicality_horizon, WidthSeries};
use crate::pointer::{build_povm, POVMSet, PhasePartition, Quadrature};
use crate::qstate::{coherent_state, DensityMatrix, GridSpec, PhasePoint};
use crate::{Error, Result};

/// `B(ρ) = (Tr ρX, Tr ρP)`.
pub fn bridge(rho: &DensityMatrix) -> Result<PhasePoint> {
    readout(rho)
}

/// Everything the quantum side of the comparison needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub grid: GridSpec,
    pub potential: Potential,
    pub cl: CLParams,
    pub partition: PhasePartition,
    pub sigma_x: f64,
    pub quadrature: Quadrature,
    pub evolver: EvolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionSpec {
    /// `(δ_X, δ_P)`; infinite components make that bound vacuous.
    #[serde(with = "maybe_infinite")]
    pub delta_z: (f64, f64),
    pub tau_c: f64,
    pub d_c: Vec<PhasePoint>,
    pub epsilon: f64,
    pub n_traj: usize,
    /// Collapse interval.
    pub dt: f64,
    /// Classical integrator step.
    pub dt_cl: f64,
    pub physics: Physics,
}

/// Smallest trajectory count accepted by [`ReductionSpec::validate`].
pub const MIN_TRAJECTORIES: usize = 100;

impl ReductionSpec {
    pub fn validate(&self) -> Result<()> {
        let (dx, dp) = self.delta_z;
        if !(dx > 0.0 && dp > 0.0) {
            return Err(Error::param("delta_z", "components must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::param("epsilon", "must lie in (0, 1)"));
        }
        if self.n_traj < MIN_TRAJECTORIES {
            return Err(Error::param("n_traj", format!("need at least {MIN_TRAJECTORIES}")));
        }
        if !(self.tau_c.is_finite() && self.tau_c > 0.0) {
            return Err(Error::param("tau_c", "must be finite and positive"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", "must be finite and positive"));
        }
        if !(self.dt_cl.is_finite() && self.dt_cl > 0.0) {
            return Err(Error::param("dt_cl", "must be finite and positive"));
        }
        if self.d_c.is_empty() {
            return Err(Error::param("d_c", "need at least one initial point"));
        }
        let ph = &self.physics;
        ph.cl.validate()?;
        ph.evolver.validate()?;
        ph.potential.validate(&ph.grid)?;
        let (x0, x1) = ph.partition.x_window();
        let omega = ph.potential.frequency_scale(&ph.grid, x0.abs().max(x1.abs()));
        if omega * self.dt_cl >= 0.1 {
            return Err(Error::param("dt_cl", format!("ω·dt_cl = {:.3} must stay below 0.1", omega * self.dt_cl)));
        }
        Ok(())
    }

    /// Collapse times checked: `k·dt < τ_c` for `k ≥ 1`.
    pub fn n_steps(&self) -> usize {
        let n = (self.tau_c / self.dt).ceil() as usize;
        if (n as f64) * self.dt < self.tau_c {
            n
        } else {
            n.saturating_sub(1)
        }
    }

    /// SHA-256 of the spec's canonical JSON.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serialises");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

mod maybe_infinite {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Num {
        F(f64),
        S(String),
    }

    fn enc(x: f64) -> Num {
        if x.is_finite() {
            Num::F(x)
        } else if x > 0.0 {
            Num::S("inf".into())
        } else {
            Num::S(x.to_string())
        }
    }

    fn dec<E: serde::de::Error>(n: Num) -> Result<f64, E> {
        match n {
            Num::F(x) => Ok(x),
            Num::S(s) if s == "inf" => Ok(f64::INFINITY),
            Num::S(s) => Err(E::custom(format!("bad number {s:?}"))),
        }
    }

    pub fn serialize<S: Serializer>(v: &(f64, f64), s: S) -> Result<S::Ok, S::Error> {
        (enc(v.0), enc(v.1)).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(f64, f64), D::Error> {
        let (a, b) = <(Num, Num)>::deserialize(d)?;
        Ok((dec(a)?, dec(b)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    X,
    P,
    /// The escape element was drawn.
    Escape,
}

/// Componentwise tube test: `|X^q − X^c| < 2δ_X` and `|P^q − P^c| < 2δ_P`.
pub fn tube_violation(zq: PhasePoint, zc: PhasePoint, delta_z: (f64, f64)) -> Option<Violation> {
    if !((zq.q - zc.q).abs() < 2.0 * delta_z.0) {
        Some(Violation::X)
    } else if !((zq.p - zc.p).abs() < 2.0 * delta_z.1) {
        Some(Violation::P)
    } else {
        None
    }
}

/// `max(|ΔX|/δ_X, |ΔP|/δ_P)`; a trajectory passes while this stays below 2.
pub fn scaled_deviation(zq: PhasePoint, zc: PhasePoint, delta_z: (f64, f64)) -> f64 {
    ((zq.q - zc.q).abs() / delta_z.0).max((zq.p - zc.p).abs() / delta_z.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub traj_id: u64,
    pub t: f64,
    pub component: Violation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub z0: PhasePoint,
    pub pass_fraction: f64,
    /// Largest scaled deviation seen before each trajectory stopped.
    pub worst_dev: f64,
    pub violations: Vec<ViolationRecord>,
    /// Ensemble-width horizon of the collapse-free evolution from `Z₀`.
    #[serde(rename = "horizon_T")]
    pub horizon_t: Option<f64>,
}

impl PointReport {
    pub fn first_violation_times(&self) -> Vec<f64> {
        self.violations.iter().map(|v| v.t).collect()
    }

    /// Counts of first-violation times in `bins` equal bins over `[0, t_max)`.
    pub fn histogram(&self, t_max: f64, bins: usize) -> Vec<u64> {
        let mut h = vec![0; bins];
        for v in &self.violations {
            let b = ((v.t / t_max) * bins as f64).floor() as usize;
            h[b.min(bins - 1)] += 1;
        }
        h
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub spec_digest: String,
    pub per_z0: Vec<PointReport>,
    pub verdict: Verdict,
    /// Smallest per-point horizon; `None` when no point's widths left the bound.
    #[serde(rename = "horizon_T")]
    pub horizon_t: Option<f64>,
    pub seed: u64,
}

impl ReductionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn min_pass_fraction(&self) -> f64 {
        self.per_z0.iter().map(|p| p.pass_fraction).fold(1.0, f64::min)
    }
}

/// The orbit plus its `3δ` tube must lie inside the partition window.
/// Infinite margins only require the orbit itself to fit.
fn check_tube(orbit: &[PhasePoint], delta_z: (f64, f64), partition: &PhasePartition) -> Result<()> {
    let pad = |d: f64| if d.is_finite() { 3.0 * d } else { 0.0 };
    let (ex, ep) = (pad(delta_z.0), pad(delta_z.1));
    let (x0, x1) = partition.x_window();
    let (p0, p1) = partition.p_window();
    for z in orbit {
        if z.q - ex < x0 || z.q + ex > x1 || z.p - ep < p0 || z.p + ep > p1 {
            return Err(Error::WindowTooSmall(format!(
                "classical tube around ({:.3}, {:.3}) leaves the window x ∈ [{x0}, {x1}], p ∈ [{p0}, {p1}]",
                z.q, z.p
            )));
        }
    }
    Ok(())
}

fn point_horizon(spec: &ReductionSpec, rho0: &DensityMatrix, record_every: f64) -> Result<Option<f64>> {
    let ph = &spec.physics;
    let n = (spec.tau_c / record_every).ceil().max(1.0);
    let ev = evolve(
        QuantumState::Mixed(rho0.clone()),
        &ph.potential,
        &ph.cl,
        &ph.evolver,
        n * record_every,
        record_every,
        false,
    )?;
    let w = WidthSeries::from_series(&ev.series);
    Ok(classicality_horizon(&w, spec.delta_z, ph.potential.length_scale())?.t)
}

/// Run the verifier; deterministic given `seed`.
pub fn verify_reduction(spec: &ReductionSpec, seed: u64) -> Result<ReductionReport> {
    spec.validate()?;
    let ph = &spec.physics;
    let n_steps = spec.n_steps();
    let orbits: Vec<Vec<PhasePoint>> = spec
        .d_c
        .iter()
        .map(|&z0| {
            let tr = classical_evolve(z0, &ph.potential, &ph.grid, n_steps as f64 * spec.dt, spec.dt_cl, spec.dt)?;
            let orbit = tr.points;
            check_tube(&orbit, spec.delta_z, &ph.partition)?;
            Ok(orbit)
        })
        .collect::<Result<_>>()?;
    let povm: Arc<POVMSet> = Arc::new(build_povm(&ph.grid, &ph.partition, ph.sigma_x, ph.quadrature)?);

    let per_z0 = spec
        .d_c
        .par_iter()
        .zip(&orbits)
        .enumerate()
        .map(|(i, (&z0, orbit))| {
            let rho0 = DensityMatrix::pure(&coherent_state(&ph.grid, z0, ph.sigma_x)?);
            let sampler = Sampler::new(&povm, &ph.potential, &ph.cl, &ph.evolver, spec.dt)?;
            let stop = |p: &crate::branching::TrajPoint| {
                let k = (p.t / spec.dt).round() as usize;
                tube_violation(p.z, orbit[k], spec.delta_z).is_some()
            };
            let trajs = sampler.ensemble(&rho0, n_steps, crate::rng::substream(seed, i as u64), spec.n_traj, &stop)?;
            let mut violations = Vec::new();
            let mut worst: f64 = 0.0;
            for tr in &trajs {
                for p in &tr.points {
                    let k = (p.t / spec.dt).round() as usize;
                    worst = worst.max(scaled_deviation(p.z, orbit[k], spec.delta_z));
                }
                match tr.outcome {
                    Outcome::Completed => {}
                    Outcome::Stopped => {
                        let p = tr.points.last().expect("stopped trajectories have points");
                        let k = (p.t / spec.dt).round() as usize;
                        let component = tube_violation(p.z, orbit[k], spec.delta_z).expect("stop predicate fired");
                        violations.push(ViolationRecord { traj_id: tr.id, t: p.t, component });
                    }
                    Outcome::Escaped => violations.push(ViolationRecord {
                        traj_id: tr.id,
                        t: tr.escape_time.expect("escape time recorded"),
                        component: Violation::Escape,
                    }),
                }
            }
            let horizon_t = point_horizon(spec, &rho0, spec.dt)?;
            Ok(PointReport {
                z0,
                pass_fraction: 1.0 - violations.len() as f64 / trajs.len() as f64,
                worst_dev: worst,
                violations,
                horizon_t,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let verdict =
        if per_z0.iter().all(|p| p.pass_fraction >= 1.0 - spec.epsilon) { Verdict::Pass } else { Verdict::Fail };
    let horizon_t = per_z0.iter().filter_map(|p| p.horizon_t).reduce(f64::min);
    Ok(ReductionReport { spec_digest: spec.digest(), per_z0, verdict, horizon_t, seed })
}
