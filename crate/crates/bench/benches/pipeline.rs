use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use pep_bench::scene;
use pep_core::encoder::{cloud_xyz, forward_segmentation, knn_indices};
use pep_core::geometry::{paint_with_mask, project_points};
use pep_core::synth::NUM_CLASSES;
use pep_core::train::{train, ExperimentConfig, OptimConfig, PaintingMode};
use pep_core::{EncoderConfig, SegmentationModel};

fn bench_painting(c: &mut Criterion) {
    let mut group = c.benchmark_group("painting");
    for n in [600, 6000] {
        let s = scene(n, 1);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("project", n), &s, |b, s| {
            b.iter(|| project_points(black_box(&s.cloud), &s.calib).unwrap())
        });
        let proj = project_points(&s.cloud, &s.calib).unwrap();
        group.bench_with_input(BenchmarkId::new("paint", n), &s, |b, s| {
            b.iter(|| paint_with_mask(black_box(&s.cloud), &proj, &s.mask, NUM_CLASSES).unwrap())
        });
    }
    group.finish();
}

fn bench_encoder(c: &mut Criterion) {
    let mut group = c.benchmark_group("encoder");
    let s = scene(600, 2);
    let proj = project_points(&s.cloud, &s.calib).unwrap();
    let painted = paint_with_mask(&s.cloud, &proj, &s.mask, NUM_CLASSES).unwrap();
    for k in [0, 8] {
        let cfg = EncoderConfig {
            knn_k: k,
            ..EncoderConfig::default()
        };
        let model = SegmentationModel::new(painted.schema().clone(), cfg, 0).unwrap();
        group.bench_with_input(BenchmarkId::new("forward_knn", k), &painted, |b, cloud| {
            b.iter(|| forward_segmentation(black_box(cloud), model.params(), &cfg).unwrap())
        });
    }
    let xyz = cloud_xyz(&painted).unwrap();
    group.bench_function("knn_600", |b| {
        b.iter(|| knn_indices(black_box(&xyz), 8).unwrap())
    });
    group.finish();
}

fn bench_training(c: &mut Criterion) {
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    let cfg = ExperimentConfig {
        painting: PaintingMode::Mask,
        train_scenes: 1,
        holdout_scenes: 1,
        log_every: 1000,
        optim: OptimConfig {
            steps: 10,
            ..OptimConfig::default()
        },
        ..ExperimentConfig::default()
    };
    group.bench_function("ten_steps_600_points", |b| {
        b.iter(|| train(black_box(&cfg)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_painting, bench_encoder, bench_training);
criterion_main!(benches);
