use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use spxrefine_bench::noise_image;
use spxrefine_core::classifier::{mlp_forward, mlp_init};
use spxrefine_core::featurizer::{raw_feature_stack, FeatureStackConfig};
use spxrefine_core::groundtruth::{synth_generate, SynthConfig};
use spxrefine_core::pooling::pool_mean_forward;
use spxrefine_core::segmentation::{
    adjacency, fh_segment, region_stats, slic_segment, FhGraph,
};

fn bench_segmentation(c: &mut Criterion) {
    let img = noise_image(128, 128, 1);
    c.bench_function("fh_segment_128", |b| {
        b.iter(|| fh_segment(black_box(&img), 0.5, 8, 0.8).unwrap())
    });
    c.bench_function("fh_partition_reused_graph_128", |b| {
        let graph = FhGraph::build(&img, 0.8).unwrap();
        b.iter(|| graph.partition(black_box(0.5), 8).unwrap())
    });
    c.bench_function("slic_segment_128", |b| {
        b.iter(|| slic_segment(black_box(&img), 256, 10.0, 10).unwrap())
    });
}

fn bench_features_and_pooling(c: &mut Criterion) {
    let synth = SynthConfig { images: 1, shapes_per_image: 2, seed: 5, ..Default::default() };
    let item = &synth_generate(&synth).unwrap().items[0];
    let cfg = FeatureStackConfig::default();
    c.bench_function("raw_feature_stack_64", |b| {
        b.iter(|| raw_feature_stack(black_box(&item.image), &cfg))
    });
    let seg = fh_segment(&item.image, 0.5, 8, 0.8).unwrap();
    let map = raw_feature_stack(&item.image, &cfg);
    c.bench_function("pool_mean_forward_64", |b| {
        b.iter(|| pool_mean_forward(black_box(&map), &seg).unwrap())
    });
    c.bench_function("region_stats_64", |b| {
        b.iter(|| region_stats(black_box(&seg), &item.image).unwrap())
    });
    c.bench_function("adjacency_64", |b| {
        b.iter(|| adjacency(black_box(&seg)))
    });
}

fn bench_classifier(c: &mut Criterion) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let params = mlp_init(&[512, 512, 512], 65, 0).unwrap();
    let rows: Vec<f64> = (0..256 * 65).map(|_| rng.random_range(-1.0..1.0)).collect();
    c.bench_function("mlp_forward_512x3_256rows", |b| {
        b.iter(|| mlp_forward(black_box(&params), &rows, 65).unwrap())
    });
}

criterion_group!(
    benches,
    bench_segmentation,
    bench_features_and_pooling,
    bench_classifier
);
criterion_main!(benches);
