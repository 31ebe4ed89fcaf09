use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use irn_bench::{kbc_batch, kbc_model};
use irn_core::paths::{generate_world, EdgeMode, PathConfig, PathModel};
use irn_core::trainer::accumulate_batch;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn kbc_training_batch(c: &mut Criterion) {
    let mut model = kbc_model(1000, 20);
    let batch = kbc_batch(&model, 64, 20);
    c.bench_function("kbc forward+backward, batch 64", |b| {
        b.iter(|| {
            model.params.zero_grads();
            black_box(accumulate_batch(&mut model, &batch).unwrap())
        })
    });
}

fn kbc_scoring(c: &mut Criterion) {
    let mut group = c.benchmark_group("score all entities");
    for n in [1000, 10_000] {
        let model = kbc_model(n, 20);
        let (q, _) = kbc_batch(&model, 1, 1).remove(0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &q, |b, q| {
            b.iter(|| black_box(model.score_all_entities(q).unwrap()))
        });
    }
    group.finish();
}

fn world_generation(c: &mut Criterion) {
    c.bench_function("knn world 500 nodes, k 50", |b| {
        b.iter(|| black_box(generate_world(500, 50, 3, EdgeMode::Knn).unwrap()))
    });
    let g = generate_world(500, 50, 3, EdgeMode::Knn).unwrap();
    c.bench_function("dijkstra 500 nodes", |b| b.iter(|| black_box(g.dijkstra(0))));
}

fn path_decoding(c: &mut Criterion) {
    let mut config = PathConfig::new(100);
    config.max_decode_len = 20;
    let model = PathModel::new(config, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    c.bench_function("path greedy decode, 100 nodes", |b| {
        b.iter(|| black_box(model.predict(3, 71).unwrap()))
    });
}

criterion_group!(benches, kbc_training_batch, kbc_scoring, world_generation, path_decoding);
criterion_main!(benches);
