use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use excon_bench::synthetic_train;
use excon_core::data::{preprocess, DEFAULT_IMPUTE_K};
use excon_core::embedder::{class_sizes, model_backward, stack_instances, CellKind, EmbedderModel};
use excon_core::extremes::derive_extremes;
use excon_core::features::catch22::catch22_all;
use excon_core::features::{extract_dataset_features, Catch22Bank};

fn bench_catch22(c: &mut Criterion) {
    let data = synthetic_train();
    let mut group = c.benchmark_group("catch22");
    for len in [64usize, 256, 1024] {
        let series: Vec<f64> = (0..len)
            .map(|t| data.instances()[t / 64].values[[t % 64, 0]])
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(len), &series, |b, s| {
            b.iter(|| catch22_all(black_box(s)))
        });
    }
    group.finish();
    c.bench_function("extract_dataset_400x4", |b| {
        b.iter(|| extract_dataset_features(black_box(&data), &Catch22Bank).unwrap())
    });
}

fn bench_extremes(c: &mut Criterion) {
    let data = preprocess(&synthetic_train(), DEFAULT_IMPUTE_K).unwrap();
    let features = extract_dataset_features(&data, &Catch22Bank).unwrap();
    c.bench_function("derive_extremes_400x88", |b| {
        b.iter(|| derive_extremes(black_box(&features)).unwrap())
    });
}

fn bench_embedder(c: &mut Criterion) {
    let data = preprocess(&synthetic_train(), DEFAULT_IMPUTE_K).unwrap();
    let features = extract_dataset_features(&data, &Catch22Bank).unwrap();
    let extremes = derive_extremes(&features).unwrap();
    let batch = &data.instances()[..64];
    let x = stack_instances(batch).unwrap();
    let labels: Vec<&str> = batch.iter().map(|i| i.label.as_str()).collect();
    let sizes: BTreeMap<String, usize> = class_sizes(data.instances().iter().map(|i| i.label.as_str()));
    let (_, n) = data.shape();
    let mut group = c.benchmark_group("embedder_batch64");
    for kind in CellKind::ALL {
        let model = EmbedderModel::new(kind, n, 128, extremes.dim(), 0.5, 42);
        group.bench_function(BenchmarkId::new("forward", kind), |b| {
            b.iter(|| model.forward_batch(black_box(&x), None).unwrap())
        });
        let cache = model.forward_batch(&x, None).unwrap();
        group.bench_function(BenchmarkId::new("backward", kind), |b| {
            b.iter(|| model_backward(&model, black_box(&cache), &labels, &extremes, &sizes).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_catch22, bench_extremes, bench_embedder);
criterion_main!(benches);
