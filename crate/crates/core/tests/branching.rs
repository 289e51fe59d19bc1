use std::sync::Arc;

use branchfall_core::branching::{
    branch_step, decoherence_functional, evolve_explicit, mixture_consistency, position_projectors, sample_trajectory,
    superorthogonality_overlap, trajectories_csv, BranchTree, ExplicitModel, ExplicitOptions, Sampler, TreeConfig,
};
use branchfall_core::dynamics::{evolve, unitary_step, CLParams, EvolverConfig, Potential};
use branchfall_core::pointer::{build_povm, POVMSet, PhasePartition, Quadrature};
use branchfall_core::qstate::{coherent_state, DensityMatrix, GridSpec, PhasePoint, WaveFunction};
use branchfall_core::stats::chi_square;
use branchfall_core::{Error, C64};
use rand::{Rng, SeedableRng};

const SIGMA: f64 = 1.0;

fn grid() -> GridSpec {
    GridSpec::symmetric(128, 16.0, 1.0).unwrap()
}

fn cfg() -> EvolverConfig {
    EvolverConfig { dt_int: 0.02, positivity_every: 0, ..Default::default() }
}

/// 3 × 3 cells of 6σ_x × 6σ_p centred on the origin.
fn wide_povm(g: &GridSpec) -> Arc<POVMSet> {
    let part = PhasePartition::around(PhasePoint::new(0.0, 0.0), 6.0 * SIGMA, 3.0 / SIGMA, 3, 3).unwrap();
    Arc::new(build_povm(g, &part, SIGMA, Quadrature::new(6, 6, Default::default())).unwrap())
}

fn cat(g: &GridSpec, a: PhasePoint, b: PhasePoint) -> WaveFunction {
    let pa = coherent_state(g, a, SIGMA).unwrap();
    let pb = coherent_state(g, b, SIGMA).unwrap();
    pa.superpose(C64::new(1.0, 0.0), &pb, C64::new(1.0, 0.0)).unwrap()
}

#[test]
fn packet_inside_one_cell_has_a_dominant_child() {
    let g = grid();
    let povm = wide_povm(&g);
    let rho = DensityMatrix::pure(&coherent_state(&g, PhasePoint::new(0.0, 0.0), SIGMA).unwrap());
    let tc = TreeConfig { dt: 0.1, prune_epsilon: 0.0, ..Default::default() };
    let mut tree = BranchTree::new(povm, rho, tc).unwrap();
    branch_step(&mut tree, &Potential::Free, &CLParams::closed(), &cfg()).unwrap();
    let best = tree.leaves().iter().map(|l| l.weight_sq).fold(0.0, f64::max);
    eprintln!("dominant child weight {best:.4}");
    assert!(best >= 0.95);
}

#[test]
fn distant_superposition_splits_in_two() {
    let g = grid();
    let povm = wide_povm(&g);
    let psi = cat(&g, PhasePoint::new(-6.0, 0.0), PhasePoint::new(6.0, 0.0));
    let tc = TreeConfig { dt: 0.1, prune_epsilon: 0.15, ..Default::default() };
    let mut tree = BranchTree::new(povm, DensityMatrix::pure(&psi), tc).unwrap();
    branch_step(&mut tree, &Potential::Free, &CLParams::new(0.5).unwrap(), &cfg()).unwrap();
    let w: Vec<f64> = tree.leaves().iter().map(|l| l.weight_sq).collect();
    eprintln!("two-branch weights {w:?}, dropped {:.3e}", tree.dropped_weight());
    assert_eq!(w.len(), 2);
    for x in w {
        assert!((x - 0.5).abs() < 0.02);
    }
}

#[test]
fn weights_are_conserved_without_pruning() {
    let g = grid();
    let povm = wide_povm(&g);
    let psi = cat(&g, PhasePoint::new(-2.0, 1.0), PhasePoint::new(3.0, -0.5));
    let tc = TreeConfig { dt: 0.5, prune_epsilon: 0.0, ..Default::default() };
    let mut tree = BranchTree::new(povm, DensityMatrix::pure(&psi), tc).unwrap();
    let (v, cl) = (Potential::Harmonic { omega: 0.3 }, CLParams::new(0.2).unwrap());
    branch_step(&mut tree, &v, &cl, &cfg()).unwrap();
    assert!((tree.leaf_weight() + tree.escape_weight() - 1.0).abs() < 0.01);
    branch_step(&mut tree, &v, &cl, &cfg()).unwrap();
    assert!((tree.total_weight() - 1.0).abs() < 0.01);
    for leaf in tree.leaves() {
        let prod: f64 = leaf.path_probs.iter().product();
        assert!((leaf.weight_sq - prod).abs() < 1e-10);
        let part = tree.povm().partition();
        assert!(part.near_cell(*leaf.history.last().unwrap(), leaf.z), "{:?}", leaf.z);
    }
    let records = tree.archive();
    for r in records {
        if let Some(p) = r.parent {
            assert!(r.weight <= records[p].weight + 1e-10);
        }
    }
    let json = tree.snapshot_json();
    assert_eq!(json["nodes"].as_array().unwrap().len(), records.len());
}

#[test]
fn leaf_cap_guards_against_explosion() {
    let g = grid();
    let psi = cat(&g, PhasePoint::new(-6.0, 0.0), PhasePoint::new(6.0, 0.0));
    let tc = TreeConfig { dt: 0.1, prune_epsilon: 0.0, leaf_cap: 3, ..Default::default() };
    let mut tree = BranchTree::new(wide_povm(&g), DensityMatrix::pure(&psi), tc).unwrap();
    let r = branch_step(&mut tree, &Potential::Free, &CLParams::closed(), &cfg());
    assert!(matches!(r, Err(Error::ExplosionGuard { .. })));
}

#[test]
fn escaping_mass_is_reported() {
    let g = grid();
    // A packet heading out of the window.
    let psi = coherent_state(&g, PhasePoint::new(7.0, 3.0), SIGMA).unwrap();
    let tc = TreeConfig { dt: 1.0, prune_epsilon: 0.0, ..Default::default() };
    let mut tree = BranchTree::new(wide_povm(&g), DensityMatrix::pure(&psi), tc).unwrap();
    let r = branch_step(&mut tree, &Potential::Free, &CLParams::closed(), &cfg());
    assert!(matches!(r, Err(Error::EscapeMass { .. })), "{r:?}");
}

#[test]
fn single_full_window_cell_leaves_the_mixture_alone() {
    let g = GridSpec::symmetric(128, 18.0, 1.0).unwrap();
    let part = PhasePartition::around(PhasePoint::new(0.0, 0.0), 24.0, 12.0, 1, 1).unwrap();
    let povm = Arc::new(build_povm(&g, &part, SIGMA, Quadrature::new(36, 24, Default::default())).unwrap());
    let rho = DensityMatrix::pure(&coherent_state(&g, PhasePoint::new(0.5, 0.2), SIGMA).unwrap());
    let (v, cl) = (Potential::Free, CLParams::new(0.1).unwrap());
    let tc = TreeConfig { dt: 0.2, prune_epsilon: 0.0, ..Default::default() };
    let mut tree = BranchTree::new(povm, rho.clone(), tc).unwrap();
    branch_step(&mut tree, &v, &cl, &cfg()).unwrap();
    let reference = evolve(rho.into(), &v, &cl, &cfg(), 0.2, 0.2, false).unwrap();
    let dev = mixture_consistency(&tree, reference.final_state.as_mixed().unwrap()).unwrap();
    eprintln!("single-cell mixture deviation {dev:.3e}");
    assert!(dev < 1e-10);
}

fn mixture_run(psi: &WaveFunction, part: &PhasePartition, nq: usize, lambda: f64, steps: usize, dt: f64) -> f64 {
    let g = psi.grid().clone();
    let povm = Arc::new(build_povm(&g, part, SIGMA, Quadrature::new(nq, nq, Default::default())).unwrap());
    let v = Potential::Harmonic { omega: 0.5 };
    let cl = CLParams::new(lambda).unwrap();
    let rho = DensityMatrix::pure(psi);
    let tc = TreeConfig { dt, prune_epsilon: 1e-4, escape_tolerance: 0.05, ..Default::default() };
    let mut tree = BranchTree::new(povm, rho.clone(), tc).unwrap();
    for _ in 0..steps {
        branch_step(&mut tree, &v, &cl, &cfg()).unwrap();
    }
    let t = steps as f64 * dt;
    let reference = evolve(rho.into(), &v, &cl, &cfg(), t, t, false).unwrap();
    mixture_consistency(&tree, reference.final_state.as_mixed().unwrap()).unwrap()
}

#[test]
fn decohered_mixture_matches_collapse_free_evolution() {
    // Cells much wider than the coherence length 1/√(Λt) and the pointer width.
    let g = GridSpec::symmetric(160, 20.0, 1.0).unwrap();
    let psi = coherent_state(&g, PhasePoint::new(1.0, 0.0), SIGMA).unwrap();
    let part = PhasePartition::around(PhasePoint::new(0.0, 0.0), 8.0 * SIGMA, 4.0 / SIGMA, 3, 3).unwrap();
    let dev = mixture_run(&psi, &part, 8, 1.0, 3, 0.5);
    eprintln!("high-Λ mixture deviation {dev:.4}");
    assert!(dev < 0.05);
}

#[test]
fn coherent_intra_cell_superposition_breaks_the_mixture() {
    let g = grid();
    // Same position column, opposite momenta: fringes in ⟨x|ρ|x⟩.
    let psi = cat(&g, PhasePoint::new(0.0, 1.5), PhasePoint::new(0.0, -1.5));
    let part = PhasePartition::around(PhasePoint::new(0.0, 0.0), 3.0 * SIGMA, 1.5 / SIGMA, 7, 9).unwrap();
    let dev = mixture_run(&psi, &part, 4, 0.0, 1, 0.05);
    eprintln!("Λ=0 mixture deviation {dev:.4}");
    assert!(dev > 0.05);
}

#[test]
fn zero_steps_records_only_the_start() {
    let g = grid();
    let povm = wide_povm(&g);
    let rho = DensityMatrix::pure(&coherent_state(&g, PhasePoint::new(1.0, -0.5), SIGMA).unwrap());
    let tr = sample_trajectory(&rho, &Potential::Free, &CLParams::closed(), &povm, 0.1, 0, 3, &cfg()).unwrap();
    assert_eq!(tr.points.len(), 1);
    assert!((tr.points[0].z.q - 1.0).abs() < 1e-8 && (tr.points[0].z.p + 0.5).abs() < 1e-8);
}

#[test]
fn born_sampling_matches_two_branch_weights() {
    let g = grid();
    let povm = wide_povm(&g);
    let psi = cat(&g, PhasePoint::new(-6.0, 0.0), PhasePoint::new(6.0, 0.0));
    let rho = DensityMatrix::pure(&psi);
    let cl = CLParams::new(0.5).unwrap();
    let sampler = Sampler::new(&povm, &Potential::Free, &cl, &cfg(), 0.1).unwrap();
    let trajs = sampler.ensemble(&rho, 1, 11, 10_000, &|_| false).unwrap();
    let mut left = 0u64;
    let mut right = 0u64;
    let mut escaped = 0;
    for t in &trajs {
        match t.points.get(1) {
            Some(p) if povm.partition().cell(p.alpha.unwrap()).ix == 0 => left += 1,
            Some(_) => right += 1,
            None => escaped += 1,
        }
    }
    assert!(escaped < 500, "{escaped} escapes");
    eprintln!("Born sampling {left}/{right}, {escaped} escapes");
    let chi = chi_square(&[left, right], &[0.5, 0.5], 5.0);
    eprintln!("Born sampling {left}/{right}, p = {:.3}", chi.p_value);
    assert!(chi.p_value > 0.01);
}

#[test]
fn sampled_histories_follow_tree_weights() {
    let g = grid();
    let povm = wide_povm(&g);
    let rho = DensityMatrix::pure(&coherent_state(&g, PhasePoint::new(1.0, 0.5), SIGMA).unwrap());
    let (v, cl) = (Potential::Harmonic { omega: 0.4 }, CLParams::new(0.5).unwrap());
    let tc = TreeConfig { dt: 0.5, prune_epsilon: 0.0, escape_tolerance: 0.05, ..Default::default() };
    let mut tree = BranchTree::new(Arc::clone(&povm), rho.clone(), tc).unwrap();
    branch_step(&mut tree, &v, &cl, &cfg()).unwrap();
    branch_step(&mut tree, &v, &cl, &cfg()).unwrap();
    let sampler = Sampler::new(&povm, &v, &cl, &cfg(), 0.5).unwrap();
    let trajs = sampler.ensemble(&rho, 2, 5, 10_000, &|_| false).unwrap();
    let leaves = tree.leaves();
    let total: f64 = leaves.iter().map(|l| l.weight_sq).sum();
    let probs: Vec<f64> = leaves.iter().map(|l| l.weight_sq / total).collect();
    let mut counts = vec![0u64; leaves.len()];
    for t in &trajs {
        if let Some(i) = leaves.iter().position(|l| l.history == t.history()) {
            counts[i] += 1;
        }
    }
    let chi = chi_square(&counts, &probs, 5.0);
    eprintln!("history frequencies χ² p = {:.3} over {} bins", chi.p_value, chi.dof + 1);
    assert!(chi.p_value > 0.01);
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let g = grid();
    let povm = wide_povm(&g);
    let rho = DensityMatrix::pure(&coherent_state(&g, PhasePoint::new(0.0, 0.0), SIGMA).unwrap());
    let (v, cl) = (Potential::Harmonic { omega: 0.2 }, CLParams::new(0.3).unwrap());
    let run = |seed| {
        let s = Sampler::new(&povm, &v, &cl, &cfg(), 0.3).unwrap();
        trajectories_csv(&s.ensemble(&rho, 3, seed, 8, &|_| false).unwrap())
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
    assert!(run(9).starts_with("traj_id,t,alpha,x,p\n"));
}

fn couplings(k: usize, seed: u64) -> Vec<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..k).map(|_| rng.random_range(0.5..1.0)).collect()
}

#[test]
fn explicit_model_without_bath_is_unitary() {
    let g = grid();
    let psi = coherent_state(&g, PhasePoint::new(1.0, 1.0), SIGMA).unwrap();
    let v = Potential::Harmonic { omega: 0.5 };
    let opts = ExplicitOptions { potential: v.clone(), ..Default::default() };
    let m = ExplicitModel::new(&psi, Vec::new(), opts).unwrap();
    let (m, report) = evolve_explicit(&m, 0.05, 10, &[-2.0, 2.0]).unwrap();
    let mut u = psi.clone();
    for _ in 0..10 {
        u = unitary_step(&u, &v, 0.05).unwrap();
    }
    let diff = m.component(0).iter().zip(u.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-13);
    assert!(report.env_overlaps.iter().flatten().all(|&o| (o - 1.0).abs() < 1e-12));
}

#[test]
fn bath_records_which_packet() {
    let g = grid();
    let psi = cat(&g, PhasePoint::new(-2.0, 0.0), PhasePoint::new(2.0, 0.0));
    let m = ExplicitModel::new(&psi, couplings(8, 3), ExplicitOptions::default()).unwrap();
    let (_, rep) = evolve_explicit(&m, 0.05, 40, &[-2.0, 2.0]).unwrap();
    eprintln!("k=8 max env overlap {:.3e}", rep.max_offdiag_overlap);
    assert!(rep.max_offdiag_overlap < 0.1);
}

#[test]
fn pure_dephasing_matches_product_of_cosines() {
    let g = grid();
    let g8 = couplings(8, 1);
    let psi = cat(&g, PhasePoint::new(-2.0, 0.0), PhasePoint::new(2.0, 0.0));
    let opts = ExplicitOptions { system_hamiltonian: false, ..Default::default() };
    let m = ExplicitModel::new(&psi, g8.clone(), opts).unwrap();
    let rho0 = DensityMatrix::pure(&psi);
    let (m, rep) = evolve_explicit(&m, 0.01, 70, &[-2.0, 2.0]).unwrap();
    let t = m.time();
    let rho = m.reduced_density().unwrap();
    let cosines = |d: f64| g8.iter().map(|gj| (gj * d * t).cos()).product::<f64>();
    for (i, j) in [(30, 98), (50, 70), (10, 100), (64, 64)] {
        let d = g.x(i) - g.x(j);
        let expect = rho0.elements()[[i, j]] * cosines(d);
        assert!((rho.elements()[[i, j]] - expect).norm() < 1e-6);
    }
    let d = g.x(g.nearest_index(2.0)) - g.x(g.nearest_index(-2.0));
    assert!((rep.env_overlaps[0][1] - cosines(d).abs()).abs() < 1e-6);
}

fn history_setup(k: usize) -> (ExplicitModel, Vec<ndarray::Array2<C64>>, Vec<Vec<usize>>) {
    let g = grid();
    // Packets approach each other and overlap near the origin.
    let psi = cat(&g, PhasePoint::new(-3.0, 2.0), PhasePoint::new(3.0, -2.0));
    let m = ExplicitModel::new(&psi, couplings(k, 7), ExplicitOptions::default()).unwrap();
    let proj = position_projectors(&g, &[-1.0, 1.0]);
    let histories = vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![2, 0], vec![2, 1], vec![2, 2]];
    (m, proj, histories)
}

#[test]
fn histories_interfere_without_environment() {
    let (m, proj, hist) = history_setup(0);
    let r = decoherence_functional(&m, &proj, &hist, 1.5, 30).unwrap();
    eprintln!("k=0 max ratio {:.3}", r.max_offdiag_ratio);
    assert!(r.max_offdiag_ratio > 0.3);
    for (a, h) in hist.iter().enumerate() {
        let realized = r.functional[a][a].0 > 1e-12;
        assert!(!realized || (r.ratios[a][a] - 1.0).abs() < 1e-12, "{h:?}");
    }
}

#[test]
fn environment_decoheres_histories() {
    let (m, proj, hist) = history_setup(8);
    let mut couplings_strong = m.couplings().to_vec();
    couplings_strong.iter_mut().for_each(|g| *g *= 2.0);
    let r = decoherence_functional(&m, &proj, &hist, 1.5, 30).unwrap();
    eprintln!("k=8 max ratio {:.3e}", r.max_offdiag_ratio);
    assert!(r.max_offdiag_ratio < 0.1);
}

#[test]
fn identity_histories_give_unit_functional() {
    let (m, _, _) = history_setup(4);
    let n = m.grid().n();
    let id = vec![ndarray::Array2::from_diag_elem(n, C64::new(1.0, 0.0))];
    let r = decoherence_functional(&m, &id, &[vec![0, 0, 0]], 0.5, 5).unwrap();
    assert!((r.functional[0][0].0 - 1.0).abs() < 1e-12 && r.functional[0][0].1.abs() < 1e-12);
}

#[test]
fn superorthogonality_distinguishes_disjoint_from_orthogonal() {
    let g = grid();
    let opts = ExplicitOptions::default;
    let a = coherent_state(&g, PhasePoint::new(-6.0, 0.0), 0.5).unwrap();
    let b = coherent_state(&g, PhasePoint::new(6.0, 0.0), 0.5).unwrap();
    let ma = ExplicitModel::new(&a, vec![0.5], opts()).unwrap();
    let mb = ExplicitModel::new(&b, vec![0.5], opts()).unwrap();
    assert!((superorthogonality_overlap(&ma, &ma).unwrap() - 1.0).abs() < 1e-12);
    assert!(superorthogonality_overlap(&ma, &mb).unwrap() < 1e-8);
    // e^{±ikx}·g(x): orthogonal, same |ψ|².
    let up = coherent_state(&g, PhasePoint::new(0.0, 4.0), SIGMA).unwrap();
    let down = coherent_state(&g, PhasePoint::new(0.0, -4.0), SIGMA).unwrap();
    assert!(up.inner(&down).norm() < 1e-6);
    let mu = ExplicitModel::new(&up, vec![], opts()).unwrap();
    let md = ExplicitModel::new(&down, vec![], opts()).unwrap();
    assert!((superorthogonality_overlap(&mu, &md).unwrap() - 1.0).abs() < 1e-10);
}
