use std::time::Instant;

use branchfall_core::dynamics::{evolve, Evolution, QuantumState};
use branchfall_core::ehrenfest::{
    classicality_horizon, decoherence_momentum_drift, ehrenfest_residual, WidthComponent, WidthSeries,
};
use branchfall_core::qstate::{coherent_state, GridSpec, PhasePoint};
use branchfall_core::{CLParams, EvolverConfig, Potential};

fn grid() -> GridSpec {
    GridSpec::symmetric(128, 16.0, 1.0).unwrap()
}

#[allow(clippy::too_many_arguments)]
fn run(
    g: &GridSpec,
    z: PhasePoint,
    sigma: f64,
    v: &Potential,
    lambda: f64,
    dt: f64,
    total: f64,
    every: f64,
) -> Evolution {
    let psi = coherent_state(g, z, sigma).unwrap();
    let cfg = EvolverConfig { dt_int: dt, positivity_every: 0, ..Default::default() };
    evolve(QuantumState::Pure(psi), v, &CLParams::new(lambda).unwrap(), &cfg, total, every, true).unwrap()
}

#[test]
fn harmonic_residual_vanishes_for_every_lambda() {
    let v = Potential::Harmonic { omega: 1.0 };
    for lambda in [0.0, 0.1, 1.0] {
        let start = Instant::now();
        let ev = run(&grid(), PhasePoint::new(2.0, 0.5), 0.8, &v, lambda, 0.01, 2.0, 0.01);
        let r = ehrenfest_residual(&ev.snapshots, &v).unwrap();
        let secs = start.elapsed().as_secs_f64();
        eprintln!("Λ={lambda}: max relative residual {:.3e} ({secs:.1}s)", r.max_relative());
        assert!(r.max_relative() < 1e-6);
        assert!(secs < 30.0);
    }
}

#[test]
fn free_momentum_is_conserved() {
    let ev = run(&grid(), PhasePoint::new(-2.0, 1.0), 1.0, &Potential::Free, 0.3, 0.02, 1.0, 0.02);
    let r = ehrenfest_residual(&ev.snapshots, &Potential::Free).unwrap();
    assert_eq!(r.force_scale, 0.0);
    assert!(r.max_residual() < 1e-8);
}

#[test]
fn quartic_gap_follows_the_width() {
    let v = Potential::Quartic { a: -0.5, b: 0.05 };
    let ev = run(&grid(), PhasePoint::new(1.5, 0.0), 0.3, &v, 0.0, 0.005, 1.0, 0.005);
    let r = ehrenfest_residual(&ev.snapshots, &v).unwrap();
    eprintln!("quartic: relative residual {:.3e}, max gap {:.3e}", r.max_relative(), r.max_gap());
    assert!(r.max_relative() < 1e-4);
    // For a Gaussian the gap is exactly ½V'''(⟨X⟩)·ΔX² = 12b⟨X⟩ΔX².
    for (row, m) in r.rows.iter().zip(&ev.series.rows[1..]).take(20) {
        let predicted = 12.0 * 0.05 * m.mean_x * m.var_x;
        assert!((row.gap - predicted).abs() < 0.05 * predicted, "t={}", row.t);
    }
    let first = r.rows.first().unwrap().gap;
    let last = r.rows.last().unwrap().gap;
    assert!(last > first);
}

#[test]
fn decoherence_term_carries_no_force() {
    let ev = run(&grid(), PhasePoint::new(1.0, 1.0), 1.0, &Potential::Harmonic { omega: 0.5 }, 1.0, 0.02, 1.0, 0.1);
    for s in &ev.snapshots {
        let rho = s.state.to_density();
        let d = decoherence_momentum_drift(&rho).unwrap();
        assert!(d.abs() < 1e-10, "t={}: {d:.3e}", s.t);
    }
}

#[test]
fn marginal_and_operator_widths_agree() {
    for lambda in [0.0, 0.5] {
        let ev =
            run(&grid(), PhasePoint::new(1.0, -1.0), 1.0, &Potential::Harmonic { omega: 0.7 }, lambda, 0.02, 1.0, 0.1);
        let a = WidthSeries::from_snapshots(&ev.snapshots);
        let b = WidthSeries::from_series(&ev.series);
        for i in 0..a.times.len() {
            assert!((a.delta_x[i] - b.delta_x[i]).abs() < 1e-10);
            assert!((a.delta_p[i] - b.delta_p[i]).abs() < 1e-10);
        }
    }
}

#[test]
fn closed_harmonic_coherent_state_never_leaves_the_bound() {
    // Matched width 1/√(2Mω) keeps the packet shape exactly.
    let omega = 1.0;
    let sigma = (0.5_f64 / omega).sqrt();
    let ev = run(&grid(), PhasePoint::new(3.0, 0.0), sigma, &Potential::Harmonic { omega }, 0.0, 0.01, 12.0, 0.1);
    let w = WidthSeries::from_evolution(&ev);
    let h = classicality_horizon(&w, (sigma, 0.5 / sigma), f64::INFINITY).unwrap();
    assert_eq!(h.t, None);
    assert_eq!(h.value(), f64::INFINITY);
}

#[test]
fn diffusion_sets_the_free_horizon() {
    let g = GridSpec::symmetric(256, 22.0, 1.0).unwrap();
    let (lambda, delta_p) = (0.5, 0.5);
    let ev = run(&g, PhasePoint::new(0.0, 0.0), 1.0, &Potential::Free, lambda, 0.01, 1.5, 0.01);
    let w = WidthSeries::from_evolution(&ev);
    let h = classicality_horizon(&w, (10.0, delta_p), f64::INFINITY).unwrap();
    let analytic = (4.0 * delta_p * delta_p - 0.25) / (2.0 * lambda);
    eprintln!("free horizon {:?} vs analytic {analytic}", h.t);
    assert_eq!(h.violated_component, Some(WidthComponent::DeltaP));
    assert!((h.value() - analytic).abs() < 0.05 * analytic);
}

#[test]
fn heavier_particles_stay_narrow_longer() {
    let sigma = 0.5;
    let mut horizons = Vec::new();
    for mass in [1.0, 2.0] {
        let g = GridSpec::symmetric(128, 16.0, mass).unwrap();
        let ev = run(&g, PhasePoint::new(0.0, 0.0), sigma, &Potential::Free, 0.0, 0.01, 3.0, 0.01);
        let w = WidthSeries::from_evolution(&ev);
        let h = classicality_horizon(&w, (sigma, 10.0), f64::INFINITY).unwrap();
        // σ(t) = σ√(1 + (t/2Mσ²)²) reaches 2σ at t = 2√3·Mσ².
        let analytic = 2.0 * 3f64.sqrt() * mass * sigma * sigma;
        eprintln!("M={mass}: T = {:?}, analytic {analytic:.3}", h.t);
        assert!((h.value() - analytic).abs() < 0.05 * analytic);
        horizons.push(h.value());
    }
    assert!(horizons[1] > horizons[0]);
}
