use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use super::tree::readout;
use crate::dynamics::{CLParams, EvolverConfig, Potential, Propagator};
use crate::pointer::{BranchWeights, POVMSet};
use crate::qstate::{DensityMatrix, PhasePoint};
use crate::rng::stream;
use crate::{Error, Result};

/// One recorded point: the collapse outcome `α` (none for the initial
/// readout) and `Z = (Tr ρX, Tr ρP)` of the post-collapse state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajPoint {
    pub t: f64,
    pub alpha: Option<usize>,
    pub z: PhasePoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    /// The escape element was drawn; the trajectory ends there.
    Escaped,
    /// The caller's stop predicate fired.
    Stopped,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub id: u64,
    pub points: Vec<TrajPoint>,
    pub outcome: Outcome,
    pub final_state: DensityMatrix,
    /// Time of the escape draw, if any.
    pub escape_time: Option<f64>,
}

impl Trajectory {
    /// `Err(EscapeSampled)` if the trajectory left the partition.
    pub fn check(&self) -> Result<()> {
        match self.escape_time {
            Some(t) => Err(Error::EscapeSampled { t }),
            None => Ok(()),
        }
    }

    pub fn history(&self) -> Vec<usize> {
        self.points.iter().filter_map(|p| p.alpha).collect()
    }
}

pub const TRAJECTORY_CSV_HEADER: &str = "traj_id,t,alpha,x,p";

/// Trajectories as CSV; the initial readout has `alpha = -1`.
pub fn trajectories_csv(trajs: &[Trajectory]) -> String {
    let mut s = String::from(TRAJECTORY_CSV_HEADER);
    s.push('\n');
    for tr in trajs {
        for p in &tr.points {
            let a = p.alpha.map_or(-1, |a| a as i64);
            let _ = writeln!(s, "{},{},{},{},{}", tr.id, p.t, a, p.z.q, p.z.p);
        }
    }
    s
}

type Cached = Arc<(DensityMatrix, BranchWeights)>;

/// Born-rule trajectory sampler over a fixed POVM and collapse interval.
pub struct Sampler<'a> {
    povm: &'a POVMSet,
    prop: Propagator,
    steps: usize,
    dt: f64,
    memo_depth: usize,
    memo: Mutex<HashMap<Vec<usize>, Cached>>,
}

impl<'a> Sampler<'a> {
    pub fn new(povm: &'a POVMSet, v: &Potential, cl: &CLParams, cfg: &EvolverConfig, dt: f64) -> Result<Self> {
        cfg.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", "collapse interval must be positive"));
        }
        let steps = cfg.substeps(dt);
        let prop = Propagator::new(povm.grid(), v, cl, dt / steps as f64)?;
        Ok(Sampler { povm, prop, steps, dt, memo_depth: 2, memo: Mutex::new(HashMap::new()) })
    }

    /// Share the evolved state of histories shorter than `depth` between
    /// trajectories of one ensemble. Results are unaffected.
    pub fn with_memo_depth(mut self, depth: usize) -> Self {
        self.memo_depth = depth;
        self
    }

    fn evolve_and_weigh(&self, rho: &DensityMatrix) -> (DensityMatrix, BranchWeights) {
        let mut r = rho.clone();
        self.prop.advance_density(&mut r, self.steps);
        let w = self.povm.branch_weights(&r);
        (r, w)
    }

    fn step(&self, history: &[usize], rho: &DensityMatrix) -> Cached {
        if history.len() >= self.memo_depth {
            return Arc::new(self.evolve_and_weigh(rho));
        }
        if let Some(c) = self.memo.lock().expect("memo poisoned").get(history) {
            return Arc::clone(c);
        }
        let c = Arc::new(self.evolve_and_weigh(rho));
        self.memo.lock().expect("memo poisoned").entry(history.to_vec()).or_insert(c).clone()
    }

    /// Run one trajectory on stream `(seed, id)`.
    pub fn run(
        &self,
        rho0: &DensityMatrix,
        n_steps: usize,
        seed: u64,
        id: u64,
        stop: &(dyn Fn(&TrajPoint) -> bool + Sync),
    ) -> Result<Trajectory> {
        let mut rng = stream(seed, id);
        let mut rho = rho0.clone();
        let mut points = vec![TrajPoint { t: 0.0, alpha: None, z: readout(&rho)? }];
        let mut history = Vec::with_capacity(n_steps);
        let mut outcome = Outcome::Completed;
        let mut escape_time = None;
        if stop(&points[0]) {
            outcome = Outcome::Stopped;
        }
        let mut i = 0;
        while outcome == Outcome::Completed && i < n_steps {
            i += 1;
            let t = i as f64 * self.dt;
            let cached = self.step(&history, &rho);
            let (evolved, w) = (&cached.0, &cached.1);
            let probs: Vec<f64> = w.cells.iter().map(|q| q.max(0.0)).collect();
            let rest = w.rest.max(0.0);
            let total: f64 = probs.iter().sum::<f64>() + rest;
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::param("state", "branch weights vanish").at(t));
            }
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut drawn = None;
            for (a, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    drawn = Some(a);
                    break;
                }
            }
            let Some(alpha) = drawn else {
                outcome = Outcome::Escaped;
                escape_time = Some(t);
                rho = evolved.clone();
                break;
            };
            let (next, _) = self.povm.project(alpha, evolved).map_err(|e| e.at(t))?;
            rho = next;
            history.push(alpha);
            let p = TrajPoint { t, alpha: Some(alpha), z: readout(&rho).map_err(|e| e.at(t))? };
            points.push(p);
            if stop(&p) {
                outcome = Outcome::Stopped;
            }
        }
        Ok(Trajectory { id, points, outcome, final_state: rho, escape_time })
    }

    /// `n_traj` trajectories on streams `(seed, 0..n_traj)`, in id order.
    pub fn ensemble(
        &self,
        rho0: &DensityMatrix,
        n_steps: usize,
        seed: u64,
        n_traj: usize,
        stop: &(dyn Fn(&TrajPoint) -> bool + Sync),
    ) -> Result<Vec<Trajectory>> {
        (0..n_traj as u64).into_par_iter().map(|id| self.run(rho0, n_steps, seed, id, stop)).collect()
    }
}

/// One sampled trajectory: `n_steps` rounds of evolution for `dt` followed
/// by a Born-rule collapse onto a POVM cell.
#[allow(clippy::too_many_arguments)]
pub fn sample_trajectory(
    rho0: &DensityMatrix,
    v: &Potential,
    cl: &CLParams,
    povm: &POVMSet,
    dt: f64,
    n_steps: usize,
    rng_seed: u64,
    cfg: &EvolverConfig,
) -> Result<Trajectory> {
    Sampler::new(povm, v, cl, cfg, dt)?.with_memo_depth(0).run(rho0, n_steps, rng_seed, 0, &|_| false)
}
