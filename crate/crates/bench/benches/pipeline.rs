//! Generation, simulation, and validation timings at the 24-GPU shape.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use tawsim_bench::{experiment_cfg, experiment_cost, experiment_topo, A800_FLOPS};
use tawsim_core::{generate, simulate, validate_semantics, Strategy};

fn bench_generate(c: &mut Criterion) {
    let cfg = experiment_cfg();
    let mut g = c.benchmark_group("generate");
    for s in [Strategy::Tawpipe, Strategy::Weipipe, Strategy::OneFOneB] {
        g.bench_function(s.name(), |b| {
            b.iter(|| generate(black_box(s), black_box(&cfg), 1).unwrap())
        });
    }
    g.finish();
}

fn bench_simulate(c: &mut Criterion) {
    let cfg = experiment_cfg();
    let topo = experiment_topo();
    let cost = experiment_cost();
    let mut g = c.benchmark_group("simulate");
    for s in [Strategy::Tawpipe, Strategy::Weipipe, Strategy::OneFOneB] {
        let prog = generate(s, &cfg, 1).unwrap();
        g.bench_function(s.name(), |b| {
            b.iter(|| simulate(black_box(&prog), &topo, &cost, A800_FLOPS).unwrap())
        });
    }
    g.finish();
}

fn bench_validate(c: &mut Criterion) {
    let cfg = experiment_cfg();
    let prog = generate(Strategy::Tawpipe, &cfg, 1).unwrap();
    c.bench_function("validate/tawpipe", |b| {
        b.iter(|| {
            let rep = validate_semantics(black_box(&prog));
            assert!(rep.passed());
            rep
        })
    });
}

criterion_group!(benches, bench_generate, bench_simulate, bench_validate);
criterion_main!(benches);
