//! One runner per experiment kind. Each turns a [`RunConfig`] into named
//! output files held in memory; nothing here touches the filesystem.

use std::fmt::Write as _;
use std::sync::Arc;

use serde_json::json;

use branchfall_core::branching::{
    branch_step, decoherence_functional, evolve_explicit, mixture_consistency, position_projectors, trajectories_csv,
    ExplicitOptions, Outcome, Sampler, TreeConfig, MAX_HISTORIES, MAX_HISTORY_STEPS,
};
use branchfall_core::dynamics::{evolve, QuantumState};
use branchfall_core::ehrenfest::{classicality_horizon, ehrenfest_residual, WidthSeries};
use branchfall_core::mechanisms::{
    bohm_evolve, compatibility_score, grw_ensemble, hit_log_csv, BohmEnsemble, GuidanceTable,
};
use branchfall_core::pointer::{build_povm, predictability_sieve, pvm_quality, Quadrature};
use branchfall_core::qstate::coherent_state;
use branchfall_core::reduction::{classical_evolve, verify_reduction, Physics, Verdict};
use branchfall_core::{
    BranchTree, CLParams, DensityMatrix, Error, EvolverConfig, ExplicitModel, GRWParams, GridSpec, POVMSet,
    PhasePartition, PhasePoint, Potential, ReductionSpec, Result, WaveFunction, C64,
};

use crate::config::{Kind, PotentialKind, RunConfig};

/// Output of a finished experiment.
#[derive(Debug, Default)]
pub struct Artifacts {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, Vec<u8>)>,
    pub verdict: Option<Verdict>,
}

impl Artifacts {
    fn text(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body.into_bytes()));
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) {
        let mut body = serde_json::to_string_pretty(value).expect("json values serialise");
        body.push('\n');
        self.text(name, body);
    }
}

/// The physical setup shared by every kind.
pub struct Setup {
    pub grid: GridSpec,
    pub potential: Potential,
    pub cl: CLParams,
    pub evolver: EvolverConfig,
}

impl Setup {
    pub fn from_config(c: &RunConfig) -> Result<Self> {
        let grid = GridSpec::symmetric(c.grid_n, c.grid_half_width, c.mass)?;
        let potential = match c.potential {
            PotentialKind::Free => Potential::Free,
            PotentialKind::Harmonic => Potential::Harmonic { omega: c.omega },
            PotentialKind::Quartic => Potential::Quartic { a: c.quartic_a, b: c.quartic_b },
        };
        potential.validate(&grid)?;
        let cl = CLParams::new(c.lambda)?;
        let evolver = EvolverConfig { dt_int: c.dt_int, positivity_every: c.positivity_every, ..Default::default() };
        evolver.validate()?;
        Ok(Setup { grid, potential, cl, evolver })
    }

    fn packet(&self, c: &RunConfig) -> Result<WaveFunction> {
        coherent_state(&self.grid, PhasePoint::new(c.x0, c.p0), c.sigma_x)
    }

    /// Equal-amplitude superposition of `packets`, or the single packet at `(x0, p0)`.
    fn superposition(&self, c: &RunConfig) -> Result<WaveFunction> {
        let parts = self.components(c)?;
        let n = self.grid.n();
        let amps: Vec<C64> = (0..n).map(|i| parts.iter().map(|p| p.amplitudes()[i]).sum()).collect();
        let mut psi = WaveFunction::new(self.grid.clone(), amps)?;
        psi.normalize()?;
        Ok(psi)
    }

    fn components(&self, c: &RunConfig) -> Result<Vec<WaveFunction>> {
        if c.packets.is_empty() {
            return Ok(vec![self.packet(c)?]);
        }
        let scale = C64::new(1.0 / (c.packets.len() as f64).sqrt(), 0.0);
        c.packets
            .iter()
            .map(|&z| {
                let psi = coherent_state(&self.grid, z, c.sigma_x)?;
                WaveFunction::new(self.grid.clone(), psi.amplitudes().iter().map(|a| a * scale).collect())
            })
            .collect()
    }

    fn partition(&self, c: &RunConfig) -> Result<PhasePartition> {
        PhasePartition::covering((c.window_x.0, c.window_x.1), (c.window_p.0, c.window_p.1), c.cell_x, c.cell_p)
    }

    fn quadrature(c: &RunConfig) -> Quadrature {
        Quadrature::new(c.quadrature_n, c.quadrature_n, c.quadrature_rule)
    }

    fn povm(&self, c: &RunConfig) -> Result<POVMSet> {
        build_povm(&self.grid, &self.partition(c)?, c.sigma_x, Self::quadrature(c))
    }

    fn tree_config(c: &RunConfig) -> TreeConfig {
        TreeConfig {
            dt: c.collapse_dt,
            prune_epsilon: c.prune_epsilon,
            escape_tolerance: c.escape_tolerance,
            leaf_cap: c.leaf_cap,
            ..Default::default()
        }
    }

    fn reduction_spec(&self, c: &RunConfig) -> Result<ReductionSpec> {
        let spec = ReductionSpec {
            delta_z: (c.delta_x.0, c.delta_p.0),
            tau_c: c.tau_c,
            d_c: c.d_c.clone(),
            epsilon: c.epsilon,
            n_traj: c.n_traj,
            dt: c.collapse_dt,
            dt_cl: c.dt_cl,
            physics: Physics {
                grid: self.grid.clone(),
                potential: self.potential.clone(),
                cl: self.cl,
                partition: self.partition(c)?,
                sigma_x: c.sigma_x,
                quadrature: Self::quadrature(c),
                evolver: self.evolver.clone(),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: "must be finite and positive".into() })
    }
}

fn nonzero(name: &'static str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: "must be at least 1".into() })
    }
}

/// Cheap checks that need no evolution: grid, potential, packets and, for
/// the kinds that use one, the partition.
pub fn prepare(c: &RunConfig) -> Result<Setup> {
    let s = Setup::from_config(c)?;
    positive("sigma_x", c.sigma_x)?;
    match c.kind {
        Kind::Evolve | Kind::Ehrenfest => {
            positive("record_every", c.record_every)?;
            s.packet(c)?;
        }
        Kind::Sieve => {
            positive("sieve_horizon", c.sieve_horizon)?;
            positive("record_every", c.record_every)?;
            if c.sigma_list.iter().any(|w| w.is_nan() || *w <= 0.0) {
                return Err(Error::InvalidParameter { name: "sigma_list", reason: "widths must be positive".into() });
            }
        }
        Kind::Branch | Kind::Sample => {
            positive("collapse_dt", c.collapse_dt)?;
            nonzero("n_collapses", c.n_collapses)?;
            s.partition(c)?;
            Setup::tree_config(c).validate()?;
            s.packet(c)?;
        }
        Kind::Explicit => {
            positive("explicit_dt", c.explicit_dt)?;
            positive("history_dt", c.history_dt)?;
            if c.history_steps == 0 || c.history_steps > MAX_HISTORY_STEPS + 1 {
                return Err(Error::InvalidParameter {
                    name: "history_steps",
                    reason: format!("must lie in 1..={}", MAX_HISTORY_STEPS + 1),
                });
            }
            let n_hist = (c.history_edges.len() + 1).checked_pow(c.history_steps as u32);
            if n_hist.is_none_or(|n| n > MAX_HISTORIES) {
                return Err(Error::InvalidParameter {
                    name: "history_edges",
                    reason: format!("history count exceeds {MAX_HISTORIES}"),
                });
            }
            s.superposition(c)?;
        }
        Kind::Grw => {
            GRWParams::new(c.hit_rate, c.r_c)?;
            positive("collapse_dt", c.collapse_dt)?;
            s.partition(c)?;
            s.packet(c)?;
        }
        Kind::Bohm => {
            positive("record_every", c.record_every)?;
            nonzero("n_particles", c.n_particles)?;
            s.components(c)?;
        }
        Kind::Reduce => {
            s.reduction_spec(c)?;
        }
    }
    Ok(s)
}

pub fn run(c: &RunConfig) -> Result<Artifacts> {
    let s = prepare(c)?;
    let mut out = Artifacts::default();
    match c.kind {
        Kind::Evolve => run_evolve(c, &s, &mut out)?,
        Kind::Sieve => run_sieve(c, &s, &mut out)?,
        Kind::Branch => run_branch(c, &s, &mut out)?,
        Kind::Sample => run_sample(c, &s, &mut out)?,
        Kind::Explicit => run_explicit(c, &s, &mut out)?,
        Kind::Grw => run_grw(c, &s, &mut out)?,
        Kind::Bohm => run_bohm(c, &s, &mut out)?,
        Kind::Ehrenfest => run_ehrenfest(c, &s, &mut out)?,
        Kind::Reduce => run_reduce(c, &s, &mut out)?,
    }
    Ok(out)
}

fn run_evolve(c: &RunConfig, s: &Setup, out: &mut Artifacts) -> Result<()> {
    let psi = s.packet(c)?;
    let ev = evolve(psi.into(), &s.potential, &s.cl, &s.evolver, c.total_time, c.record_every, false)?;
    out.text("timeseries.csv", ev.series.to_csv());
    out.json(
        "summary.json",
        &json!({
            "records": ev.series.rows.len(),
            "final": ev.series.rows.last(),
            "min_eigenvalue": ev.min_eigenvalue,
        }),
    );
    Ok(())
}

fn run_sieve(c: &RunConfig, s: &Setup, out: &mut Artifacts) -> Result<()> {
    let z0 = PhasePoint::new(c.x0, c.p0);
    let r = predictability_sieve(
        &s.grid,
        &s.potential,
        &s.cl,
        &c.sigma_list,
        z0,
        c.sieve_horizon,
        c.record_every,
        &s.evolver,
    )?;
    out.text("sieve.csv", r.to_csv());
    let mut j = r.summary_json();
    j["horizon"] = json!(c.sieve_horizon);
    j["final_s_lin"] = json!(r.curves.iter().map(|cv| cv.last().copied().unwrap_or(0.0)).collect::<Vec<_>>());
    j["widths"] = json!(r.widths);
    out.json("sieve.json", &j);
    Ok(())
}

fn nodes_csv(tree: &BranchTree) -> String {
    let mut s = String::from("id,parent,t,weight,x,p,leaf,history\n");
    for n in tree.archive() {
        let parent = n.parent.map_or(-1, |p| p as i64);
        let hist = n.history.iter().map(usize::to_string).collect::<Vec<_>>().join("-");
        let _ = writeln!(s, "{},{parent},{},{},{},{},{},{hist}", n.id, n.t, n.weight, n.z.q, n.z.p, n.leaf);
    }
    s
}

fn run_branch(c: &RunConfig, s: &Setup, out: &mut Artifacts) -> Result<()> {
    let povm = Arc::new(s.povm(c)?);
    let rho0 = DensityMatrix::pure(&s.packet(c)?);
    let mut tree = BranchTree::new(Arc::clone(&povm), rho0.clone(), Setup::tree_config(c))?;
    for _ in 0..c.n_collapses {
        branch_step(&mut tree, &s.potential, &s.cl, &s.evolver)?;
    }
    let total = c.n_collapses as f64 * c.collapse_dt;
    let reference = evolve(QuantumState::Mixed(rho0), &s.potential, &s.cl, &s.evolver, total, total, false)?;
    let QuantumState::Mixed(reference) = reference.final_state else { unreachable!("density input stays mixed") };
    let deviation = mixture_consistency(&tree, &reference)?;
    let mut j = tree.snapshot_json();
    j["leaves"] = json!(tree.leaves().len());
    j["leaf_weight"] = json!(tree.leaf_weight());
    j["mixture_deviation"] = json!(deviation);
    j["reference_peak_density"] = json!(reference.position_density().iter().copied().fold(0.0, f64::max));
    out.text("nodes.csv", nodes_csv(&tree));
    out.json("tree.json", &j);
    out.json("pvm.json", &serde_json::to_value(pvm_quality(&povm)).expect("quality serialises"));
    Ok(())
}

fn run_sample(c: &RunConfig, s: &Setup, out: &mut Artifacts) -> Result<()> {
    let povm = s.povm(c)?;
    let rho0 = DensityMatrix::pure(&s.packet(c)?);
    let sampler = Sampler::new(&povm, &s.potential, &s.cl, &s.evolver, c.collapse_dt)?;
    let trajs = sampler.ensemble(&rho0, c.n_collapses, c.master_seed, c.n_traj, &|_| false)?;
    let count = |o: Outcome| trajs.iter().filter(|t| t.outcome == o).count();
    out.text("trajectories.csv", trajectories_csv(&trajs));
    out.json(
        "summary.json",
        &json!({
            "n_traj": trajs.len(),
            "completed": count(Outcome::Completed),
            "escaped": count(Outcome::Escaped),
            "escape_times": trajs.iter().filter_map(|t| t.escape_time).collect::<Vec<_>>(),
        }),
    );
    Ok(())
}

/// Every sequence of `steps` bin indices over `bins` bins.
fn all_histories(bins: usize, steps: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..steps {
        out = out
            .into_iter()
            .flat_map(|h| {
                (0..bins).map(move |b| {
                    let mut h = h.clone();
                    h.push(b);
                    h
                })
            })
            .collect();
    }
    out
}

fn run_explicit(c: &RunConfig, s: &Setup, out: &mut Artifacts) -> Result<()> {
    let psi = s.superposition(c)?;
    let options = ExplicitOptions {
        potential: s.potential.clone(),
        system_hamiltonian: c.system_hamiltonian,
        fields: Vec::new(),
    };
    let model = ExplicitModel::new(&psi, c.couplings.clone(), options)?;
    let mut csv = String::from("t,probe_a,probe_b,overlap\n");
    let mut state = model.clone();
    let mut report = None;
    let chunk = (c.explicit_steps / 10).max(1);
    let mut done = 0;
    while done < c.explicit_steps {
        let n = chunk.min(c.explicit_steps - done);
        let (next, r) = evolve_explicit(&state, c.explicit_dt, n, &c.probes)?;
        for (a, row) in r.env_overlaps.iter().enumerate() {
            for (b, v) in row.iter().enumerate().skip(a + 1) {
                let _ = writeln!(csv, "{},{},{},{v}", r.t, c.probes[a], c.probes[b]);
            }
        }
        state = next;
        report = Some(r);
        done += n;
    }
    let edges = &c.history_edges;
    let projectors = position_projectors(&s.grid, edges);
    let histories = all_histories(edges.len() + 1, c.history_steps);
    let substeps = ((c.history_dt / c.explicit_dt).round() as usize).max(1);
    let hist = decoherence_functional(&state, &projectors, &histories, c.history_dt, substeps)?;
    out.text("overlaps.csv", csv);
    out.json(
        "decoherence.json",
        &json!({
            "final": report,
            "histories": {
                "start_time": state.time(),
                "histories": hist.histories,
                "ratios": hist.ratios,
                "max_offdiag_ratio": hist.max_offdiag_ratio,
            },
        }),
    );
    Ok(())
}

/// Hits scored against the decoherence tree; bounds the cost of the comparison.
const MAX_SCORED_HITS: usize = 32;

fn run_grw(c: &RunConfig, s: &Setup, out: &mut Artifacts) -> Result<()> {
    let psi = s.packet(c)?;
    let params = GRWParams::new(c.hit_rate, c.r_c)?;
    let runs = grw_ensemble(&psi, &s.potential, &params, c.total_time, &s.evolver, c.master_seed, c.n_runs)?;
    let hits: Vec<_> = runs.iter().flat_map(|r| r.hits.iter().map(move |h| (r.stream_id, h))).collect();
    let n_hits = hits.len();

    let scored: Vec<_> = hits.into_iter().take(MAX_SCORED_HITS).collect();
    let mut scores = Vec::with_capacity(scored.len());
    if !scored.is_empty() {
        let povm = Arc::new(s.povm(c)?);
        let mut tree = BranchTree::new(povm, DensityMatrix::pure(&psi), Setup::tree_config(c))?;
        let last = scored.iter().map(|(_, h)| h.t).fold(0.0, f64::max);
        let mut trees = vec![tree.clone()];
        while tree.time() + 0.5 * c.collapse_dt < last {
            branch_step(&mut tree, &s.potential, &s.cl, &s.evolver)?;
            trees.push(tree.clone());
        }
        for (id, h) in &scored {
            let k = ((h.t / c.collapse_dt).round() as usize).min(trees.len() - 1);
            let m = compatibility_score(&h.post, &trees[k])?;
            scores.push(json!({
                "traj_id": id, "t": h.t, "tree_t": trees[k].time(), "leaf_id": m.leaf_id, "score": m.score,
            }));
        }
    }
    let per_run: Vec<usize> = runs.iter().map(|r| r.hits.len()).collect();
    let mean = if runs.is_empty() { 0.0 } else { n_hits as f64 / runs.len() as f64 };
    out.text("hits.csv", hit_log_csv(&runs));
    out.json(
        "grw.json",
        &json!({
            "n_runs": runs.len(),
            "total_hits": n_hits,
            "mean_hits": mean,
            "expected_hits": c.hit_rate * c.total_time,
            "hits_per_run": per_run,
            "compatibility": scores,
        }),
    );
    Ok(())
}

fn run_bohm(c: &RunConfig, s: &Setup, out: &mut Artifacts) -> Result<()> {
    let parts = s.components(c)?;
    let table = GuidanceTable::from_wave_run(&parts, &s.potential, c.total_time, c.record_every, &s.evolver)?;
    let ens = BohmEnsemble::sample(table.field(0), c.n_particles, c.master_seed)?;
    let r = bohm_evolve(&ens, &table, c.ode_dt, c.checkpoint_every)?;
    out.text("bohm.csv", r.to_csv());
    out.json("bohm.json", &r.stats_json());
    Ok(())
}

fn run_ehrenfest(c: &RunConfig, s: &Setup, out: &mut Artifacts) -> Result<()> {
    let psi = s.packet(c)?;
    let ev = evolve(psi.into(), &s.potential, &s.cl, &s.evolver, c.total_time, c.record_every, true)?;
    let residual = ehrenfest_residual(&ev.snapshots, &s.potential)?;
    let widths = WidthSeries::from_evolution(&ev);
    let h = classicality_horizon(&widths, (c.delta_x.0, c.delta_p.0), s.potential.length_scale())?;
    out.text("residual.csv", residual.to_csv());
    out.text("widths.csv", widths.to_csv());
    let mut j = serde_json::to_value(h).expect("horizon serialises");
    j["max_relative_residual"] = json!(residual.max_relative());
    j["max_gap"] = json!(residual.max_gap());
    j["force_scale"] = json!(residual.force_scale);
    out.json("horizon.json", &j);
    Ok(())
}

fn run_reduce(c: &RunConfig, s: &Setup, out: &mut Artifacts) -> Result<()> {
    let spec = s.reduction_spec(c)?;
    let report = verify_reduction(&spec, c.master_seed)?;
    let mut violations = String::from("z0_index,traj_id,t,component\n");
    for (i, p) in report.per_z0.iter().enumerate() {
        for v in &p.violations {
            let comp = serde_json::to_value(v.component).expect("component serialises");
            let _ = writeln!(violations, "{i},{},{},{}", v.traj_id, v.t, comp.as_str().unwrap_or("?"));
        }
    }
    let total = spec.n_steps() as f64 * spec.dt;
    let mut classical = String::from("z0_index,t,x,p\n");
    for (i, z0) in spec.d_c.iter().enumerate() {
        let tr = classical_evolve(*z0, &s.potential, &s.grid, total, spec.dt_cl, spec.dt)?;
        for (t, z) in tr.times.iter().zip(&tr.points) {
            let _ = writeln!(classical, "{i},{t},{},{}", z.q, z.p);
        }
    }
    let mut body = report.to_json();
    body.push('\n');
    out.text("report.json", body);
    out.text("violations.csv", violations);
    out.text("classical.csv", classical);
    out.verdict = Some(report.verdict);
    Ok(())
}
