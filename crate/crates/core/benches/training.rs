use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use setrlusi::data::{gen_synthetic_domains, split_labeled_target, SyntheticSpec};
use setrlusi::sampling::StreamTag;
use setrlusi::{build_predicate_pool, train_setrlusi, Execution, PoolConfig, RngStream, TrainConfig, TransferTask};

fn task(n_per_domain: usize) -> TransferTask {
    let domains = gen_synthetic_domains(&SyntheticSpec::grid12(n_per_domain, 1)).unwrap();
    let mut rng = RngStream::tagged(1, StreamTag::Split, 0, 0);
    let (train, test) = split_labeled_target(&domains[11], 0.5, &mut rng).unwrap();
    let sources = [0, 4, 8].iter().map(|&i| domains[i].clone()).collect();
    TransferTask::new(sources, train, test).unwrap()
}

fn training(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_setrlusi");
    group.sample_size(10);
    for n in [100, 200] {
        let task = task(n);
        let mut rng = RngStream::tagged(1, StreamTag::Pool, 0, 0);
        let pool = build_predicate_pool(&task, &PoolConfig::default(), &mut rng).unwrap();
        for (label, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            let config = TrainConfig {
                rounds: 10,
                execution,
                ..TrainConfig::default()
            };
            group.bench_with_input(BenchmarkId::new(label, task.target_train.n()), &config, |b, config| {
                b.iter(|| train_setrlusi(&task, &pool, config).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, training);
criterion_main!(benches);
