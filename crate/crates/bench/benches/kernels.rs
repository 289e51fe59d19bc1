use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use branchfall_bench::{grid, packet, povm};
use branchfall_core::branching::Sampler;
use branchfall_core::dynamics::Propagator;
use branchfall_core::{CLParams, EvolverConfig, Potential};

fn cl_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("cl_step");
    for n in [64, 128, 256] {
        let g = grid(n);
        let prop =
            Propagator::new(&g, &Potential::Harmonic { omega: 1.0 }, &CLParams::new(0.1).unwrap(), 0.01).unwrap();
        let rho = packet(&g);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                let mut r = rho.clone();
                prop.advance_density(&mut r, 1);
                black_box(r)
            })
        });
    }
    group.finish();
}

fn povm_build(c: &mut Criterion) {
    let g = grid(128);
    c.bench_function("povm_build_128", |b| b.iter(|| black_box(povm(&g))));
}

fn branch_weights(c: &mut Criterion) {
    let g = grid(128);
    let set = povm(&g);
    let rho = packet(&g);
    c.bench_function("branch_weights_128", |b| b.iter(|| black_box(set.branch_weights(&rho))));
}

fn sampler(c: &mut Criterion) {
    let g = grid(128);
    let set = povm(&g);
    let rho = packet(&g);
    let v = Potential::Harmonic { omega: 1.0 };
    let cl = CLParams::new(0.1).unwrap();
    let cfg = EvolverConfig { positivity_every: 0, ..Default::default() };
    let mut group = c.benchmark_group("sampler");
    group.sample_size(10);
    group.bench_function("ensemble_16x4", |b| {
        b.iter(|| {
            let s = Sampler::new(&set, &v, &cl, &cfg, 0.5).unwrap();
            black_box(s.ensemble(&rho, 4, 7, 16, &|_| false).unwrap())
        })
    });
    group.finish();
}

criterion_group!(benches, cl_step, povm_build, branch_weights, sampler);
criterion_main!(benches);
