use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidnav_core::agents::synthetic::{partial_query, synthetic_world, WorldSpec};
use vidnav_core::embedding::{slerp, RefinementParams};
use vidnav_core::navigation::Answer;
use vidnav_core::{Embedding, Session, SessionConfig, VideoIndex, VideoMetadata, VideoRecord};

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Embedding {
    let raw: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    Embedding::normalize(&raw).unwrap()
}

fn bench_slerp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = RefinementParams::default();
    let mut group = c.benchmark_group("slerp");
    for d in [64, 768, 1408] {
        let (p, a) = (unit(&mut rng, d), unit(&mut rng, d));
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| slerp(black_box(&p), black_box(&a), &params).unwrap())
        });
    }
    group.finish();
}

fn bench_top_k(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("top_k");
    group.sample_size(20);
    for (n, d) in [(1_000, 64), (10_000, 256), (100_000, 64)] {
        let records: Vec<VideoRecord> = (0..n)
            .map(|i| VideoRecord {
                id: format!("v{i:06}"),
                embedding: unit(&mut rng, d),
                metadata: VideoMetadata::default(),
            })
            .collect();
        let index = VideoIndex::from_records(records).unwrap();
        let query = unit(&mut rng, d);
        group.bench_function(BenchmarkId::new(format!("d{d}"), n), |b| {
            b.iter(|| index.top_k(black_box(&query), 10).unwrap())
        });
    }
    group.finish();
}

fn bench_session_round(c: &mut Criterion) {
    let world = synthetic_world(&WorldSpec::default()).unwrap();
    let index = VideoIndex::from_records(world.corpus.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let target = &world.corpus[17];
    let query = partial_query(&target.metadata, 2, &mut rng);
    let config = SessionConfig::default();
    let start = Session::start(&query, &world.backend, &index, &config).unwrap();
    c.bench_function("session_round/synthetic_1000", |b| {
        b.iter_batched(
            || start.clone(),
            |mut s| {
                s.next_question(&world.backend, &index).unwrap();
                s.submit_answer(Answer::VideoInMind(target), &world.backend, &index)
                    .unwrap();
                s
            },
            criterion::BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_slerp, bench_top_k, bench_session_round);
criterion_main!(benches);
