use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lp2dh_core::codebook::{fit_codebook_packed, video_histogram_packed};
use lp2dh_core::corpus::synthetic_corpus;
use lp2dh_core::features::encode_video;
use lp2dh_core::hash::{train_hashing, HashConfig};
use lp2dh_core::lle::{affinity, knn};
use lp2dh_core::pdv::{extract_pdvs, Stride};
use lp2dh_core::VideoVolume;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn texture() -> VideoVolume {
    let corpus = synthetic_corpus(1, (40, 40, 40), 10.0, 1).unwrap();
    corpus.videos()[0].volume.clone()
}

fn bench_lle(c: &mut Criterion) {
    let volume = texture();
    let pdvs = extract_pdvs(&volume, 5, Stride::DENSE, Some(5000), 1).unwrap();
    let mut group = c.benchmark_group("lle");
    group.sample_size(10);
    group.bench_function("knn P=5 N=5000 K=10", |b| {
        b.iter(|| knn(black_box(pdvs.matrix()), 10).unwrap())
    });
    group.bench_function("affinity P=5 N=5000 K=10", |b| {
        b.iter(|| affinity(black_box(pdvs.matrix()), 10).unwrap())
    });
    group.finish();
}

fn bench_hashing(c: &mut Criterion) {
    let volume = texture();
    let pdvs = extract_pdvs(&volume, 3, Stride::DENSE, Some(2000), 2).unwrap();
    let (_, a) = affinity(pdvs.matrix(), 10).unwrap();
    let config = HashConfig {
        max_outer: 5,
        ..HashConfig::default()
    };
    let mut group = c.benchmark_group("hashing");
    group.sample_size(10);
    group.bench_function("train P=3 N=2000 5 outer", |b| {
        b.iter(|| train_hashing(black_box(&pdvs), &a, &config).unwrap())
    });
    group.finish();
}

fn bench_encoding(c: &mut Criterion) {
    let volume = texture();
    let pdvs = extract_pdvs(&volume, 5, Stride::DENSE, Some(2000), 3).unwrap();
    let (_, a) = affinity(pdvs.matrix(), 10).unwrap();
    let config = HashConfig {
        code_bits: 40,
        max_outer: 2,
        ..HashConfig::default()
    };
    let model = train_hashing(&pdvs, &a, &config).unwrap();
    let codes = encode_video(&model, &volume).unwrap();
    let book = fit_codebook_packed(&codes, 40, 5, 200, 4).unwrap();

    let mut group = c.benchmark_group("encoding");
    group.sample_size(10);
    group.bench_function("encode 40^3 video P=5 M=40", |b| {
        b.iter(|| encode_video(black_box(&model), &volume).unwrap())
    });
    group.bench_function("histogram C=200", |b| {
        b.iter(|| video_histogram_packed(&book, black_box(&codes)).unwrap())
    });
    group.finish();
}

fn bench_kmeans(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // clustered codes: random prototypes with a few flipped bits each
    let prototypes: Vec<u128> = (0..300).map(|_| rng.random_range(0..1u128 << 40)).collect();
    let codes: Vec<u128> = (0..20000)
        .map(|_| {
            let mut code = prototypes[rng.random_range(0..prototypes.len())];
            for _ in 0..3 {
                code ^= 1 << rng.random_range(0..40);
            }
            code
        })
        .collect();
    let mut group = c.benchmark_group("codebook");
    group.sample_size(10);
    group.bench_function("kmeans M=40 N=20000 C=200", |b| {
        b.iter(|| fit_codebook_packed(black_box(&codes), 40, 5, 200, 6).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_lle,
    bench_hashing,
    bench_encoding,
    bench_kmeans
);
criterion_main!(benches);
