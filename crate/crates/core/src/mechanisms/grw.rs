use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::branching::BranchTree;
use crate::dynamics::{CLParams, EvolverConfig, Potential, Propagator};
use crate::qstate::WaveFunction;
use crate::rng::{stream, StreamRng};
use crate::{Error, Result};

/// Rate and width of the localisation hits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GRWParams {
    pub hit_rate: f64,
    pub r_c: f64,
}

impl GRWParams {
    pub fn new(hit_rate: f64, r_c: f64) -> Result<Self> {
        let p = GRWParams { hit_rate, r_c };
        p.validate()?;
        Ok(p)
    }

    /// `hit_rate = 0` is accepted and switches hits off.
    pub fn validate(&self) -> Result<()> {
        if !(self.hit_rate.is_finite() && self.hit_rate >= 0.0) {
            return Err(Error::param("hit_rate", "must be finite and non-negative"));
        }
        if !(self.r_c.is_finite() && self.r_c > 0.0) {
            return Err(Error::param("r_c", "must be finite and positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub x0: f64,
    pub pre: WaveFunction,
    pub post: WaveFunction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrwRun {
    pub seed: u64,
    pub stream_id: u64,
    pub hits: Vec<Hit>,
    pub final_state: WaveFunction,
}

pub const HIT_LOG_HEADER: &str = "traj_id,t,x0";

/// Hit log for a set of runs, rows in input order.
pub fn hit_log_csv(runs: &[GrwRun]) -> String {
    let mut s = String::from(HIT_LOG_HEADER);
    s.push('\n');
    for r in runs {
        for h in &r.hits {
            let _ = writeln!(s, "{},{},{}", r.stream_id, h.t, h.x0);
        }
    }
    s
}

/// Draw a hit centre from `⟨ψ|L²_{x₀}|ψ⟩` and return it with `L_{x₀}ψ/‖L_{x₀}ψ‖`.
///
/// The hit density is `|ψ|²` smeared by a Gaussian of standard deviation
/// `r_C/√2`, sampled as a grid point plus Gaussian noise.
pub fn apply_hit<R: Rng + ?Sized>(psi: &WaveFunction, params: &GRWParams, rng: &mut R) -> Result<(f64, WaveFunction)> {
    params.validate()?;
    let g = psi.grid();
    let dx = g.dx();
    let dens = psi.density();
    let total: f64 = dens.iter().sum::<f64>() * dx;
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::param("psi", "state has no norm"));
    }
    let u = rng.random::<f64>() * total;
    let mut cum = 0.0;
    let mut idx = dens.len() - 1;
    for (i, d) in dens.iter().enumerate() {
        cum += d * dx;
        if u < cum {
            idx = i;
            break;
        }
    }
    let noise = Normal::new(0.0, params.r_c / std::f64::consts::SQRT_2).expect("positive width");
    let x0 = g.x(idx) + noise.sample(rng);
    let inv = 1.0 / (2.0 * params.r_c * params.r_c);
    let amps = psi.amplitudes().iter().zip(g.positions()).map(|(a, x)| a * (-(x - x0).powi(2) * inv).exp()).collect();
    let mut post = WaveFunction::new(g.clone(), amps)?;
    post.normalize()?;
    Ok((x0, post))
}

/// Unitary evolution punctuated by Poisson hits.
pub fn grw_evolve(
    psi: &WaveFunction,
    v: &Potential,
    params: &GRWParams,
    total_time: f64,
    cfg: &EvolverConfig,
    seed: u64,
    stream_id: u64,
) -> Result<GrwRun> {
    params.validate()?;
    cfg.validate()?;
    if !(total_time.is_finite() && total_time >= 0.0) {
        return Err(Error::param("total_time", "must be finite and non-negative"));
    }
    let mut rng: StreamRng = stream(seed, stream_id);
    let mut state = psi.clone();
    let mut hits = Vec::new();
    let mut t = 0.0;
    let waits = (params.hit_rate > 0.0).then(|| Exp::new(params.hit_rate).expect("positive rate"));
    loop {
        let next = match &waits {
            Some(w) => t + w.sample(&mut rng),
            None => f64::INFINITY,
        };
        let stop = next.min(total_time);
        propagate(&mut state, v, stop - t, cfg)?;
        t = stop;
        if next >= total_time {
            break;
        }
        let (x0, post) = apply_hit(&state, params, &mut rng).map_err(|e| e.at(t))?;
        hits.push(Hit { t, x0, pre: std::mem::replace(&mut state, post.clone()), post });
    }
    Ok(GrwRun { seed, stream_id, hits, final_state: state })
}

/// Independent runs on streams `0..n_runs`, returned in stream order.
pub fn grw_ensemble(
    psi: &WaveFunction,
    v: &Potential,
    params: &GRWParams,
    total_time: f64,
    cfg: &EvolverConfig,
    seed: u64,
    n_runs: usize,
) -> Result<Vec<GrwRun>> {
    use rayon::prelude::*;
    (0..n_runs as u64).into_par_iter().map(|id| grw_evolve(psi, v, params, total_time, cfg, seed, id)).collect()
}

fn propagate(psi: &mut WaveFunction, v: &Potential, span: f64, cfg: &EvolverConfig) -> Result<()> {
    if span <= 0.0 {
        return Ok(());
    }
    let steps = cfg.substeps(span);
    let prop = Propagator::new(psi.grid(), v, &CLParams::closed(), span / steps as f64)?;
    prop.advance_wave(psi, steps);
    Ok(())
}

/// Best match of a post-hit state among the current leaves.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Compatibility {
    pub leaf_id: usize,
    pub history: Vec<usize>,
    pub score: f64,
}

/// Largest `⟨ψ|ρ_leaf|ψ⟩` over the tree's leaves.
pub fn compatibility_score(post_hit: &WaveFunction, tree: &BranchTree) -> Result<Compatibility> {
    if post_hit.grid() != tree.povm().grid() {
        return Err(Error::InvalidGrid("state and tree grids differ".into()));
    }
    tree.leaves()
        .iter()
        .map(|l| Compatibility {
            leaf_id: l.id,
            history: l.history.clone(),
            score: l.state.fidelity_with_pure(post_hit).clamp(0.0, 1.0),
        })
        .max_by(|a, b| a.score.total_cmp(&b.score))
        .ok_or(Error::EmptyTree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{coherent_state, GridSpec, PhasePoint};

    fn grid() -> GridSpec {
        GridSpec::symmetric(128, 16.0, 1.0).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(GRWParams::new(-1.0, 1.0).is_err());
        assert!(GRWParams::new(1.0, 0.0).is_err());
        assert!(GRWParams::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn hits_restore_unit_norm() {
        let g = grid();
        let psi = coherent_state(&g, PhasePoint::new(0.0, 1.0), 2.0).unwrap();
        let p = GRWParams::new(1.0, 0.5).unwrap();
        let mut rng = stream(3, 0);
        for _ in 0..50 {
            let (_, post) = apply_hit(&psi, &p, &mut rng).unwrap();
            assert!((post.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn same_seed_same_run() {
        let g = grid();
        let psi = coherent_state(&g, PhasePoint::new(0.0, 0.0), 1.0).unwrap();
        let p = GRWParams::new(2.0, 1.0).unwrap();
        let cfg = EvolverConfig::default();
        let a = grw_evolve(&psi, &Potential::Free, &p, 1.0, &cfg, 9, 4).unwrap();
        let b = grw_evolve(&psi, &Potential::Free, &p, 1.0, &cfg, 9, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(hit_log_csv(std::slice::from_ref(&a)), hit_log_csv(&[b]));
    }
}
