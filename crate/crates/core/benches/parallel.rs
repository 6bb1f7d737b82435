//! Batch kernels on a one-thread rayon pool against the default pool. Build with
//! `--no-default-features` to time the plain sequential fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;

use seqstruct::datagen::generate_random_trees;
use seqstruct::sampler::sample_corpus;
use seqstruct::seqmodel::{loss_grad, CellKind, HeadKind, Objective, Standardizer};
use seqstruct::structures::TreeBackend;
use seqstruct::{
    build_constraint_matrix, build_tabular_oracle, recover_density, ModelDims, SamplerConfig, SamplingMeasure,
    SeqModel, Serialization, StructureBackend, StructureInstance,
};

fn setup() -> (TreeBackend, Vec<StructureInstance>) {
    let labels: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
    let trees = generate_random_trees(&labels, 64, 8, false, 1).unwrap();
    (TreeBackend::new(labels, false).unwrap(), trees.into_iter().map(StructureInstance::Tree).collect())
}

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("1-thread", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("default", ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn bench(c: &mut Criterion) {
    let (backend, xs) = setup();
    let cfg = SamplerConfig::streaming(SamplingMeasure::Uniform).with_seed(3);

    let mut g = c.benchmark_group("sample_corpus");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| sample_corpus(&backend, &xs, &cfg, 8).unwrap()))
        });
    }
    g.finish();

    let batch: Vec<Serialization> = sample_corpus(&backend, &xs, &cfg, 1).unwrap().into_iter().map(|(_, a)| a).collect();
    let constraints = build_constraint_matrix(&batch, &backend).unwrap();
    let vocab = backend.alphabet().len();
    let dims = ModelDims { vocab, hidden: 32, mixture: 2, cell: CellKind::Gru, head: HeadKind::None };
    let model = SeqModel::init(dims, Standardizer::identity(vocab), 5).unwrap();
    let mut g = c.benchmark_group("loss_grad");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| loss_grad(&model, &batch, Objective::Generative, &constraints, 0.5).unwrap()))
        });
    }
    g.finish();

    let oracle = build_tabular_oracle(&xs, &backend, &cfg, 100_000).unwrap();
    let mut g = c.benchmark_group("recover_density");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| recover_density(&backend, &xs[0], &oracle, 2000, &cfg, 0).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
