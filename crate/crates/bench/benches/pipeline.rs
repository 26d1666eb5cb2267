use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use scanood::detectors::{ledoit_wolf, rf_deep_score, rf_deep_train};
use scanood::eval::{auroc, fpr95};
use scanood::forest::ForestParams;
use scanood::grid3d::{boundary_interior_split, dilate, erode, hd95};
use scanood::matrix::SampleMatrix;
use scanood_bench::{ball, cohort, scores};

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    for n in [200, 2000, 20000] {
        let id = scores(n, 0.0, "id");
        let ood = scores(n, 1.5, "ood");
        group.bench_with_input(BenchmarkId::new("auroc", n), &n, |b, _| {
            b.iter(|| auroc(black_box(&id), black_box(&ood)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("fpr95", n), &n, |b, _| {
            b.iter(|| fpr95(black_box(&id), black_box(&ood)).unwrap())
        });
    }
    group.finish();
}

fn morphology(c: &mut Criterion) {
    let mask = ball(48, 15.0);
    let other = ball(48, 13.0);
    c.bench_function("erode_r1_48", |b| b.iter(|| erode(black_box(&mask), 1)));
    c.bench_function("dilate_r2_48", |b| b.iter(|| dilate(black_box(&mask), 2)));
    c.bench_function("boundary_split_48", |b| b.iter(|| boundary_interior_split(black_box(&mask)).unwrap()));
    c.bench_function("hd95_48", |b| b.iter(|| hd95(black_box(&mask), &other, [1.0; 3]).unwrap()));
}

fn forest(c: &mut Criterion) {
    let (id, ood) = cohort(256, 50);
    let id: Vec<_> = id.iter().collect();
    let ood: Vec<_> = ood.iter().collect();
    let params = ForestParams {
        n_trees: 20,
        ..ForestParams::default()
    };
    let mut group = c.benchmark_group("rf_deep");
    group.sample_size(10);
    group.bench_function("train_20_trees", |b| b.iter(|| rf_deep_train(&id, &ood, &params).unwrap()));
    let model = rf_deep_train(&id, &ood, &params).unwrap();
    group.bench_function("score_scan", |b| b.iter(|| rf_deep_score(&model, black_box(&id[..4])).unwrap()));
    group.finish();
}

fn shrinkage(c: &mut Criterion) {
    let (id, _) = cohort(256, 100);
    let x = SampleMatrix::from_descriptors(&id).unwrap();
    let mut group = c.benchmark_group("ledoit_wolf");
    group.sample_size(10);
    group.bench_function("d256_n400", |b| b.iter(|| ledoit_wolf(black_box(&x)).unwrap()));
    group.finish();
}

criterion_group!(benches, metrics, morphology, forest, shrinkage);
criterion_main!(benches);
