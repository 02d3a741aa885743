//! One worker against all cores on the three data-parallel hot paths.
//! Each iteration builds its own pool, which costs well under a
//! millisecond next to these workloads. Build with
//! `--no-default-features` to measure the sequential fallback itself.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pcv_core::corpus::Label;
use pcv_core::learn::{KnnModel, Metric};
use pcv_core::par;
use pcv_core::providers::{default_mock_ensemble, AskContext, Provider};
use pcv_core::questions::{default_question_bank, PromptTemplate};
use pcv_core::synth::synth_corpus_counts;
use pcv_core::vectorize::{vectorize_corpus, VectorizeOptions};
use pcv_core::viz::{tsne, TsneParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(0.0..1.0)).collect()).collect()
}

fn thread_counts() -> Vec<usize> {
    let n = std::thread::available_parallelism().map_or(1, |n| n.get());
    if n > 1 {
        vec![1, n]
    } else {
        vec![1]
    }
}

fn knn(c: &mut Criterion) {
    let x = points(4000, 21, 1);
    let y: Vec<u8> = (0..x.len()).map(|i| (i % 2) as u8).collect();
    let q = points(1000, 21, 2);
    let model = KnnModel::fit(&x, &y, 5, Metric::Euclidean).unwrap();
    let mut g = c.benchmark_group("knn_predict");
    for t in thread_counts() {
        g.bench_with_input(BenchmarkId::new("threads", t), &t, |b, &t| {
            b.iter(|| par::with_threads(Some(t), || model.predict(&q).unwrap()))
        });
    }
    g.finish();
}

fn embed(c: &mut Criterion) {
    let x = points(300, 21, 3);
    let params = TsneParams {
        iterations: 100,
        ..TsneParams::default()
    };
    let mut g = c.benchmark_group("tsne");
    g.sample_size(10);
    for t in thread_counts() {
        g.bench_with_input(BenchmarkId::new("threads", t), &t, |b, &t| {
            b.iter(|| par::with_threads(Some(t), || tsne(&x, &params).unwrap()))
        });
    }
    g.finish();
}

fn vectorize(c: &mut Criterion) {
    let corpus = synth_corpus_counts(&[(Label::Ham, 100), (Label::Phishing, 100)], 4).unwrap();
    let bank = default_question_bank();
    let digest = bank.digest();
    let template = PromptTemplate::default_template();
    let ensemble = Provider::from_specs(&default_mock_ensemble()).unwrap();
    let mut g = c.benchmark_group("vectorize");
    g.sample_size(10);
    for t in thread_counts() {
        let opts = VectorizeOptions {
            parallelism: Some(t),
            ..VectorizeOptions::default()
        };
        g.bench_with_input(BenchmarkId::new("threads", t), &t, |b, _| {
            b.iter(|| {
                let ctx = AskContext::new(&template, &digest);
                vectorize_corpus(&corpus, &bank, &ensemble, &ctx, &opts).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, knn, embed, vectorize);
criterion_main!(benches);
