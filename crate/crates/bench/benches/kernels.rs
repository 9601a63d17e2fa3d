use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use linkdrift_bench::{default_cell, drifting_pair, long_haul_request, warm_simulation};
use linkdrift_core::eon::select_lightpath;
use linkdrift_core::forecast::ltc_step;
use linkdrift_core::metrics::{cumulative_curves, default_tconv_configs, tconv};

fn ltc(c: &mut Criterion) {
    let cell = default_cell(30);
    let x = vec![0.1; 30];
    c.bench_function("ltc_step/hidden30", |b| b.iter(|| ltc_step(&cell, black_box(&x), black_box(&[0.4])).unwrap()));
}

fn rsa(c: &mut Criterion) {
    let sim = warm_simulation(500);
    let (demand, paths) = long_haul_request(&sim);
    c.bench_function("select_lightpath/euro28_loaded", |b| {
        b.iter(|| select_lightpath(sim.topology(), sim.grid(), black_box(&demand), &paths))
    });
    c.bench_function("simulation/run_step", |b| {
        b.iter_batched(|| sim.clone(), |mut s| s.run_step().unwrap(), BatchSize::LargeInput)
    });
}

fn metrics(c: &mut Criterion) {
    let (pred, actual) = drifting_pair(300);
    let cfg = default_tconv_configs()[0];
    c.bench_function("tconv/300", |b| b.iter(|| tconv(black_box(&pred), &actual, cfg, 1.0).unwrap()));
    c.bench_function("cumulative_curves/50", |b| {
        b.iter(|| cumulative_curves(black_box(&pred), &actual, 50, 1.0).unwrap())
    });
}

criterion_group!(benches, ltc, rsa, metrics);
criterion_main!(benches);
