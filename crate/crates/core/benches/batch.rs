//! Sequential against rayon execution for batched solves and the
//! invariant suites.

#[path = "../tests/common/mod.rs"]
mod common;

use std::hint::black_box;

use common::{random_split, solver, VARIANTS};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use oam_core::check::{run_checks, CheckOptions};
use oam_core::par::Execution;
use oam_core::solver::{solve_batch, Solver, SolverOptions};
use oam_core::Vector;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_batch");
    group.sample_size(10);
    for d in [5, 20] {
        let jobs: Vec<(Solver, Option<Vector>)> = (0..4)
            .flat_map(|seed| VARIANTS.map(|v| (solver(random_split(seed, d), v, 2_000), None)))
            .collect();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, d), &jobs, |b, jobs| {
                b.iter(|| black_box(solve_batch(jobs, exec)))
            });
        }
    }
    group.finish();
}

fn checks(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_checks");
    group.sample_size(10);
    let s = Solver::new(random_split(0, 20), SolverOptions::default()).unwrap();
    for (name, exec) in MODES {
        let mut opts = CheckOptions::new(200, 1).unwrap();
        opts.exec = exec;
        group.bench_function(name, |b| {
            b.iter(|| black_box(run_checks(&s, &opts).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, batch, checks);
criterion_main!(benches);
