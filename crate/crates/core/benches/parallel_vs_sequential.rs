use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use switchsup::config::{synthetic_rewards, ExperimentConfig};
use switchsup::exec::{map_indexed, Execution};
use switchsup::experiment::sweep;
use switchsup::meanfield::{integrate, FieldKind, MeanFieldPoint, MeanFieldScenario, DEFAULT_STEP};
use switchsup::rng::RngStream;
use switchsup::scenario::RewardTable;

const POLICIES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn seed_sweep(c: &mut Criterion) {
    let mut config = ExperimentConfig::synthetic_preset();
    config.evaluations = 4000;
    let configs = vec![config];
    let seeds: Vec<u64> = (1..=8).collect();
    let mut group = c.benchmark_group("seed_sweep");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| black_box(sweep(&configs, &seeds, *exec).unwrap()))
        });
    }
    group.finish();
}

fn meanfield_batch(c: &mut Criterion) {
    let scenario =
        MeanFieldScenario::new(RewardTable::new(synthetic_rewards()).unwrap(), 0.01).unwrap();
    let mut rng = RngStream::new(1);
    let starts: Vec<MeanFieldPoint> = (0..32)
        .map(|_| MeanFieldPoint::random_interior(&scenario, &mut rng))
        .collect();
    let mut group = c.benchmark_group("meanfield_trajectories");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| {
                map_indexed(starts.len(), *exec, |i| {
                    integrate(
                        &scenario,
                        &starts[i],
                        DEFAULT_STEP,
                        10.0,
                        FieldKind::Literal,
                    )
                    .unwrap()
                    .len()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, seed_sweep, meanfield_batch);
criterion_main!(benches);
