use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use scope_core::evalmetrics::{levenshtein_similarity, MinHashConfig, MinHasher};
use scope_core::intervene::{apply_hook, InterventionConfig};
use scope_core::{score_dimension, score_dimension_fast, SaeModel, SubspaceSpec};

fn alignment(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("alignment_score");
    for n in [100usize, 1000] {
        let cr: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let gen: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        group.bench_with_input(BenchmarkId::new("sorted", n), &n, |b, _| {
            b.iter(|| score_dimension_fast(black_box(&cr), black_box(&gen)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("pairwise", n), &n, |b, _| {
            b.iter(|| score_dimension(black_box(&cr), black_box(&gen)).unwrap())
        });
    }
    group.finish();
}

fn sae(c: &mut Criterion) {
    let model = SaeModel::init(64, 512, 0.1, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h: Vec<f64> = (0..64).map(|_| rng.random_range(-3.0..3.0)).collect();
    c.bench_function("sae_encode_64x512", |b| b.iter(|| model.encode(black_box(&h)).unwrap()));
    let spec = SubspaceSpec::from_indices(512, 0.1, &(0..32).collect::<Vec<_>>()).unwrap();
    let config = InterventionConfig::clamp(spec, 0.1);
    c.bench_function("apply_hook_clamp_64x512", |b| {
        b.iter(|| apply_hook(&model, black_box(&h), &config).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let a = "the quick brown fox jumps over the lazy dog and keeps running far away ".repeat(4);
    let b = "the quick brown cat jumps over the lazy dog and then sits down quietly ".repeat(4);
    let hasher = MinHasher::new(&MinHashConfig::default());
    c.bench_function("minhash_similarity_p256", |bench| {
        bench.iter(|| hasher.similarity(black_box(&a), black_box(&b)))
    });
    c.bench_function("levenshtein_similarity_280", |bench| {
        bench.iter(|| levenshtein_similarity(black_box(&a), black_box(&b)))
    });
}

criterion_group!(benches, alignment, sae, metrics);
criterion_main!(benches);
