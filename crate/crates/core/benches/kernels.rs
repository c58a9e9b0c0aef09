use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use diachron::analysis::{evaluate_lpos, DriftSeries, SliceEmbeddings};
use diachron::corpus::{slice_pairs, NoiseDistribution, TimeSlicedCorpus};
use diachron::init::{init_random, Initial};
use diachron::isg::{train_incremental, Direction};
use diachron::model::{EmbeddingMatrix, TrainConfig};
use diachron::synth::{generate, SynthSpec};
use diachron::{Execution, ModelKind};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn corpus() -> (usize, TimeSlicedCorpus) {
    let spec = SynthSpec {
        tokens_per_slice: 20_000,
        seed: 1,
        ..Default::default()
    };
    let (vocab, c) = generate(&spec).unwrap().encode().unwrap();
    (vocab.len(), c)
}

fn isg(c: &TimeSlicedCorpus, rows: usize, mode: Execution) -> (Vec<EmbeddingMatrix>, Vec<EmbeddingMatrix>) {
    let cfg = TrainConfig {
        dim: 20,
        epochs: 1,
        batch_size: 4096,
        execution: mode,
        ..Default::default()
    };
    let Initial::Isg { word, context } = init_random(rows, cfg.dim, 1, ModelKind::Isg, c.num_slices()) else {
        unreachable!()
    };
    let m = train_incremental(c, None, word, context, &cfg, Direction::Forward).unwrap();
    (m.word, m.context)
}

fn kernels(cr: &mut Criterion) {
    let (rows, c) = corpus();
    let docs: Vec<_> = c.slice(0).iter().collect();
    let pairs = slice_pairs(&docs, 4, Execution::Sequential);
    let noise = NoiseDistribution::from_counts(&c.counts(0, rows)).unwrap();
    let (word, context) = isg(&c, rows, Execution::Sequential);
    let refs: Vec<&EmbeddingMatrix> = word.iter().collect();

    let mut g = cr.benchmark_group("kernels");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::new("pairs", name), &mode, |b, &m| {
            b.iter(|| slice_pairs(black_box(&docs), 4, m))
        });
        g.bench_with_input(BenchmarkId::new("negatives", name), &mode, |b, &m| {
            b.iter(|| noise.sample_batch(black_box(&pairs), 1, 7, 0, m))
        });
        g.bench_with_input(BenchmarkId::new("drift", name), &mode, |b, &m| {
            b.iter(|| DriftSeries::from_matrices(black_box(&refs), 0, ModelKind::Isg, m).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("lpos", name), &mode, |b, &m| {
            let e = SliceEmbeddings::SkipGram {
                word: &word,
                context: &context,
            };
            b.iter(|| evaluate_lpos(black_box(&c), e, ModelKind::Isg, 4, m).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("isg_epoch", name), &mode, |b, &m| {
            b.iter(|| isg(black_box(&c), rows, m))
        });
    }
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
