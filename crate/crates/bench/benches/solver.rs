use std::sync::Arc;

use abcd_bench::er_instance;
use abcd_core::model::fixtures::pair;
use abcd_core::oracle::{grid_search, CentralizedReplica, GridSpec};
use abcd_core::runtime::PopLabel;
use abcd_core::{DistributedSolver, SolverConfig};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn evaluate(c: &mut Criterion) {
    let inst = Arc::new(er_instance(50, 0.3, 1));
    let mut sv = DistributedSolver::new(inst, SolverConfig::new(100, 10, 1, 1)).unwrap();
    c.bench_function("evaluate n=50 S=100", |b| b.iter(|| sv.evaluate(PopLabel::Main).unwrap()));
}

fn iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("iteration n=20 S=20 M=4");
    let inst = Arc::new(er_instance(20, 0.3, 2));
    let cfg = SolverConfig::new(20, 4, 1, 2);
    group.bench_function("distributed", |b| {
        b.iter_batched(
            || DistributedSolver::new(inst.clone(), cfg.clone()).unwrap(),
            |mut sv| {
                sv.iterate().unwrap();
                sv
            },
            BatchSize::SmallInput,
        )
    });
    group.bench_function("replica", |b| {
        b.iter_batched(
            || CentralizedReplica::new(inst.clone(), cfg.clone()).unwrap(),
            |mut r| {
                r.iterate();
                r
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let inst = pair(|x, y| -(x - 1.0).powi(2) - (y + 2.0).powi(2));
    c.bench_function("grid n=2 resolution=401", |b| b.iter(|| grid_search(&inst, GridSpec::new(401)).unwrap()));
}

fn generate(c: &mut Criterion) {
    c.bench_function("generate er n=50 p=0.3", |b| b.iter(|| er_instance(50, 0.3, 3)));
}

criterion_group!(benches, evaluate, iteration, oracle, generate);
criterion_main!(benches);
