//! Sequential against data-parallel execution for the two batch hot paths:
//! scoring a feature set and computing a batch gradient.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ck_core::embedding::Embedder;
use ck_core::kernel::{KernelFamily, KernelShape};
use ck_core::model::{ConversationKernel, ExampleFeatures, ModelConfig};
use ck_core::synthetic::{gen_synthetic, SyntheticConfig};
use ck_core::train::{batch_gradient, FeatureSet};
use ck_core::Execution;

const DIM: usize = 512;

fn setup(n: usize) -> (ConversationKernel, FeatureSet) {
    let syn = gen_synthetic(&SyntheticConfig {
        n_trees: n,
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    let embedder = Embedder::hash(DIM).unwrap();
    let model = ConversationKernel::init(ModelConfig::new(KernelShape::new(KernelFamily::AncSibChild, 3).unwrap(), DIM), 0).unwrap();
    let feats = FeatureSet::build(&model, &embedder, &syn.corpus, &syn.examples, Execution::Sequential).unwrap();
    (model, feats)
}

fn bench(c: &mut Criterion) {
    let (model, feats) = setup(256);
    let modes = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

    let mut group = c.benchmark_group("score");
    for (name, exec) in modes {
        group.bench_with_input(BenchmarkId::new(name, feats.len()), &exec, |b, &exec| {
            b.iter(|| feats.score(black_box(&model.params), exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("batch_gradient");
    for size in [16usize, 64] {
        let batch: Vec<(&ExampleFeatures, u8)> = feats.pairs().into_iter().take(size).collect();
        for (name, exec) in modes {
            group.bench_with_input(BenchmarkId::new(name, size), &exec, |b, &exec| {
                b.iter(|| batch_gradient(black_box(&model.params), &batch, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench
}
criterion_main!(benches);
