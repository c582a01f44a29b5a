use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use corrprune_bench::{network, scene};
use corrprune_core::contextformer::build_knn_graph;
use corrprune_core::pipeline::ForwardOptions;
use corrprune_core::vcextractor::splat_images;
use corrprune_core::TokenMatrix;

fn knn(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_knn_graph");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for n in [500, 2000] {
        let f =
            TokenMatrix::new(DMatrix::from_fn(n, 128, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| build_knn_graph(black_box(&f), 9).unwrap())
        });
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_n2000");
    group.sample_size(10);
    let pair = scene(2000, 0.5, 3);
    let opts = ForwardOptions {
        oracle: true,
        ..ForwardOptions::default()
    };
    for channels in [32, 128] {
        let net = network(channels);
        let cfg = net.config();
        let img = splat_images(&pair.correspondences, cfg.image_height, cfg.image_width);
        group.bench_with_input(BenchmarkId::from_parameter(channels), &channels, |b, _| {
            b.iter(|| {
                net.forward(Some(&img), black_box(&pair.correspondences), &opts)
                    .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, knn, forward);
criterion_main!(benches);
