use branchfall_core::dynamics::{cl_step, evolve, unitary_step, Evolution, QuantumState};
use branchfall_core::linalg::{frobenius, C64};
use branchfall_core::qstate::{coherent_state, DensityMatrix, Expectation, GridSpec, PhasePoint};
use branchfall_core::{CLParams, EvolverConfig, Potential};
use ndarray::Array2;

fn grid(mass: f64) -> GridSpec {
    GridSpec::symmetric(128, 12.0, mass).unwrap()
}

/// Room for packets that spread diffusively without touching the edges.
fn wide_grid() -> GridSpec {
    GridSpec::symmetric(256, 22.0, 1.0).unwrap()
}

fn cfg(dt: f64) -> EvolverConfig {
    EvolverConfig { dt_int: dt, positivity_every: 0, ..Default::default() }
}

fn run(state: QuantumState, v: &Potential, lambda: f64, dt: f64, total: f64, every: f64) -> Evolution {
    evolve(state, v, &CLParams::new(lambda).unwrap(), &cfg(dt), total, every, false).unwrap()
}

#[test]
fn free_packet_follows_free_orbit() {
    let g = grid(2.0);
    let psi = coherent_state(&g, PhasePoint::new(-3.0, 1.5), 1.0).unwrap();
    let ev = run(psi.into(), &Potential::Free, 0.0, 0.01, 3.0, 0.5);
    for r in &ev.series.rows {
        assert!((r.mean_x - (-3.0 + 1.5 * r.t / 2.0)).abs() < 1e-9, "t={}", r.t);
        assert!((r.mean_p - 1.5).abs() < 1e-9);
    }
}

#[test]
fn free_gaussian_spreads_analytically() {
    let g = grid(1.5);
    let s = 0.8;
    let psi = coherent_state(&g, PhasePoint::new(0.0, 0.0), s).unwrap();
    let ev = run(psi.into(), &Potential::Free, 0.0, 0.05, 2.0, 0.5);
    for r in &ev.series.rows {
        let expect = s * s + r.t * r.t / (4.0 * s * s * 1.5 * 1.5);
        assert!((r.var_x - expect).abs() < 1e-9, "t={}: {} vs {expect}", r.t, r.var_x);
    }
}

#[test]
fn harmonic_period_returns_to_start() {
    let g = grid(1.0);
    let w = 1.0;
    let psi = coherent_state(&g, PhasePoint::new(2.0, -1.0), 1.0 / (2f64).sqrt()).unwrap();
    let period = 2.0 * std::f64::consts::PI / w;
    let ev = run(psi.clone().into(), &Potential::Harmonic { omega: w }, 0.0, 1e-3, period, period / 40.0);
    let fin = ev.final_state.as_pure().unwrap();
    assert!(fin.fidelity(&psi) > 1.0 - 1e-6, "fidelity {}", fin.fidelity(&psi));
    for r in &ev.series.rows {
        let x = 2.0 * (w * r.t).cos() - (w * r.t).sin() / w;
        assert!((r.mean_x - x).abs() < 1e-6, "t={}: {} vs {x}", r.t, r.mean_x);
    }
}

#[test]
fn unitary_step_preserves_norm() {
    let g = grid(1.0);
    let mut psi = coherent_state(&g, PhasePoint::new(1.0, 2.0), 0.6).unwrap();
    let v = Potential::Quartic { a: -1.0, b: 0.1 };
    for _ in 0..50 {
        psi = unitary_step(&psi, &v, 0.02).unwrap();
    }
    assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
}

#[test]
fn zero_lambda_matches_unitary() {
    let g = grid(1.0);
    let v = Potential::Quartic { a: -0.5, b: 0.05 };
    let psi = coherent_state(&g, PhasePoint::new(1.0, 0.5), 0.9).unwrap();
    let rho = DensityMatrix::pure(&psi);
    let a = cl_step(&rho, &v, &CLParams::closed(), 0.05).unwrap();
    let b = DensityMatrix::pure(&unitary_step(&psi, &v, 0.05).unwrap());
    let diff = frobenius((a.elements() - b.elements()).view()) * g.dx();
    assert!(diff < 1e-12, "diff {diff}");
}

#[test]
fn momentum_variance_diffuses_at_two_lambda() {
    let g = wide_grid();
    let psi = coherent_state(&g, PhasePoint::new(0.0, 0.5), 1.0).unwrap();
    for lambda in [0.05, 0.3] {
        let ev = run(psi.clone().into(), &Potential::Free, lambda, 0.02, 4.0, 0.5);
        let v0 = ev.series.rows[0].var_p;
        for r in &ev.series.rows[1..] {
            let expect = v0 + 2.0 * lambda * r.t;
            assert!(((r.var_p - expect) / expect).abs() < 1e-3, "Λ={lambda} t={} {} {expect}", r.t, r.var_p);
        }
    }
}

#[test]
fn off_diagonal_lobe_decays_as_gaussian_factor() {
    // A huge mass freezes the kinetic term, isolating the dephasing factor.
    let g = grid(1e9);
    let q = 3.0;
    let a = coherent_state(&g, PhasePoint::new(-q, 0.0), 0.7).unwrap();
    let b = coherent_state(&g, PhasePoint::new(q, 0.0), 0.7).unwrap();
    let cat = a.superpose(C64::new(1.0, 0.0), &b, C64::new(1.0, 0.0)).unwrap();
    let lambda = 0.2;
    let ev =
        evolve(cat.into(), &Potential::Free, &CLParams::new(lambda).unwrap(), &cfg(0.05), 1.0, 0.25, true).unwrap();
    let i = g.nearest_index(-q);
    let j = g.nearest_index(q);
    let dq = g.x(j) - g.x(i);
    let l0 = ev.snapshots[0].state.to_density().elements()[[i, j]].norm();
    for s in &ev.snapshots[1..] {
        let l = s.state.as_mixed().unwrap().elements()[[i, j]].norm();
        let expect = l0 * (-lambda * dq * dq * s.t).exp();
        assert!(((l - expect) / expect).abs() < 1e-6, "t={}", s.t);
    }
}

#[test]
fn matches_dense_generator_on_small_grid() {
    let g = GridSpec::symmetric(32, 8.0, 1.0).unwrap();
    let n = g.n();
    let lambda = 0.1;
    let xs = g.positions();
    let k = g.wavenumbers();
    let m = g.mass();
    // Dense H = T + V in the orthonormal grid basis.
    let v = Potential::Harmonic { omega: 0.5 };
    let vals = v.values_on(&g);
    let h = Array2::from_shape_fn((n, n), |(a, b)| {
        let t: C64 =
            k.iter().map(|&kk| C64::from_polar(kk * kk / (2.0 * m), kk * (xs[a] - xs[b]))).sum::<C64>() / n as f64;
        if a == b {
            t + vals[a]
        } else {
            t
        }
    });
    let gen = |r: &Array2<C64>| -> Array2<C64> {
        let comm = h.dot(r) - r.dot(&h);
        let xr = Array2::from_shape_fn((n, n), |(a, b)| r[[a, b]] * (xs[a] - xs[b]).powi(2));
        comm.mapv(|z| z * C64::new(0.0, -1.0)) - xr.mapv(|z| z * lambda)
    };
    let psi = coherent_state(&g, PhasePoint::new(0.5, 0.3), 1.0).unwrap();
    let rho0 = DensityMatrix::pure(&psi);
    let mut r = rho0.operator();
    let tau = 1e-3;
    for _ in 0..1000 {
        let k1 = gen(&r);
        let k2 = gen(&(&r + &k1.mapv(|z| z * (tau / 2.0))));
        let k3 = gen(&(&r + &k2.mapv(|z| z * (tau / 2.0))));
        let k4 = gen(&(&r + &k3.mapv(|z| z * tau)));
        r = &r + &(&k1 + &(&k2 * C64::new(2.0, 0.0)) + &(&k3 * C64::new(2.0, 0.0)) + &k4).mapv(|z| z * (tau / 6.0));
    }
    let dense = DensityMatrix::from_operator(g.clone(), r).unwrap();
    let ev = run(rho0.clone().into(), &v, lambda, 1e-3, 1.0, 1.0);
    let split = ev.final_state.as_mixed().unwrap().clone();
    let diff = frobenius((split.operator() - dense.operator()).view());
    assert!(diff < 1e-6, "split vs dense {diff}");
    let vp0 = rho0.var_p();
    // Harmonic P² also rotates; compare diffusion via the free generator below.
    assert!(dense.var_p().is_finite() && vp0 > 0.0);

    // Free generator: Var P grows exactly as 2Λt.
    let hfree = Array2::from_shape_fn((n, n), |(a, b)| {
        k.iter().map(|&kk| C64::from_polar(kk * kk / (2.0 * m), kk * (xs[a] - xs[b]))).sum::<C64>() / n as f64
    });
    let gen = |r: &Array2<C64>| -> Array2<C64> {
        let comm = hfree.dot(r) - r.dot(&hfree);
        let xr = Array2::from_shape_fn((n, n), |(a, b)| r[[a, b]] * (xs[a] - xs[b]).powi(2));
        comm.mapv(|z| z * C64::new(0.0, -1.0)) - xr.mapv(|z| z * lambda)
    };
    let mut r = rho0.operator();
    for _ in 0..1000 {
        let k1 = gen(&r);
        let k2 = gen(&(&r + &k1.mapv(|z| z * (tau / 2.0))));
        let k3 = gen(&(&r + &k2.mapv(|z| z * (tau / 2.0))));
        let k4 = gen(&(&r + &k3.mapv(|z| z * tau)));
        r = &r + &(&k1 + &(&k2 * C64::new(2.0, 0.0)) + &(&k3 * C64::new(2.0, 0.0)) + &k4).mapv(|z| z * (tau / 6.0));
    }
    let dense = DensityMatrix::from_operator(g, r).unwrap();
    let expect = vp0 + 2.0 * lambda;
    assert!(((dense.var_p() - expect) / expect).abs() < 1e-3, "{} vs {expect}", dense.var_p());
}

#[test]
fn linear_entropy_rate_at_start() {
    let g = grid(1.0);
    let s = 1.2;
    let psi = coherent_state(&g, PhasePoint::new(0.5, 0.0), s).unwrap();
    let lambda = 0.1;
    let h = 1e-3;
    let ev = run(psi.into(), &Potential::Harmonic { omega: 1.0 }, lambda, h, 2.0 * h, h);
    let sl: Vec<f64> = ev.series.column(|r| r.s_lin);
    let rate = (-3.0 * sl[0] + 4.0 * sl[1] - sl[2]) / (2.0 * h);
    let expect = 4.0 * lambda * s * s;
    assert!(((rate - expect) / expect).abs() < 1e-3, "{rate} vs {expect}");
}

#[test]
fn first_moments_ignore_lambda() {
    let psi = coherent_state(&wide_grid(), PhasePoint::new(1.5, -0.5), 0.8).unwrap();
    for v in [Potential::Free, Potential::Harmonic { omega: 1.0 }] {
        let runs: Vec<_> = [0.0, 0.1, 1.0].iter().map(|&l| run(psi.clone().into(), &v, l, 0.01, 2.0, 0.25)).collect();
        for other in &runs[1..] {
            for (a, b) in runs[0].series.rows.iter().zip(&other.series.rows) {
                assert!((a.mean_x - b.mean_x).abs() < 1e-8, "{v:?} t={} {} {}", a.t, a.mean_x, b.mean_x);
                assert!((a.mean_p - b.mean_p).abs() < 1e-8, "{v:?} t={}", a.t);
            }
        }
    }
}

#[test]
fn purity_decays_monotonically_and_trace_is_kept() {
    let psi = coherent_state(&grid(1.0), PhasePoint::new(0.0, 1.0), 1.0).unwrap();
    let ev = evolve(
        psi.into(),
        &Potential::Free,
        &CLParams::new(0.2).unwrap(),
        &EvolverConfig { dt_int: 0.02, positivity_every: 2, ..Default::default() },
        3.0,
        0.25,
        true,
    )
    .unwrap();
    for w in ev.series.rows.windows(2) {
        assert!(w[1].purity < w[0].purity + 1e-12);
    }
    for s in &ev.snapshots {
        let rho = s.state.to_density();
        assert!((rho.trace().re - 1.0).abs() < 1e-10);
        assert!(rho.trace().im.abs() < 1e-12);
        assert!(rho.hermiticity_defect() == 0.0);
    }
    assert!(ev.min_eigenvalue.unwrap() > -1e-6);
}

#[test]
fn strang_splitting_is_second_order() {
    let g = grid(1.0);
    let v = Potential::Quartic { a: -0.5, b: 0.05 };
    let psi = coherent_state(&g, PhasePoint::new(1.0, 0.0), 0.8).unwrap();
    let end = |dt: f64| run(psi.clone().into(), &v, 0.1, dt, 1.0, 1.0).final_state.as_mixed().unwrap().operator();
    let reference = end(0.0025 / 4.0);
    let e1 = frobenius((end(0.04) - &reference).view());
    let e2 = frobenius((end(0.02) - &reference).view());
    let ratio = e1 / e2;
    assert!((3.5..4.5).contains(&ratio), "error ratio {ratio}");
}
