use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use saddleflow_bench::{reference_instance, scaling_instance};
use saddleflow_core::*;

fn bench_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("limit_build");
    for n in [64usize, 256, 1024, 4096] {
        let inst = scaling_instance(n, 11);
        group.bench_with_input(BenchmarkId::from_parameter(n), &inst, |b, inst| {
            b.iter(|| build(black_box(&inst.mask), inst.dataset.labels(), false).unwrap())
        });
    }
    group.finish();
}

fn bench_gd_epochs(c: &mut Criterion) {
    let inst = reference_instance();
    let state = ScaledNetwork::from_init(&inst.init);
    c.bench_function("gd_epoch_64x6", |b| {
        let mut net = state.clone();
        b.iter(|| {
            let eval = net.evaluate(&inst.dataset);
            net.apply_step(&inst.dataset, 0.01, &eval, 0).unwrap();
            black_box(eval.loss)
        })
    });
}

fn bench_mask_sampling(c: &mut Criterion) {
    let dataset = generate_dataset(256, 256, &LabelSpec::Gaussian, BasisSpec::Identity, 5).unwrap();
    c.bench_function("mask_256x30", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            let init = sample_init(30, 256, -1.0, seed);
            black_box(mask_matrix(&dataset, &init).unwrap())
        })
    });
}

criterion_group!(benches, bench_build, bench_gd_epochs, bench_mask_sampling);
criterion_main!(benches);
