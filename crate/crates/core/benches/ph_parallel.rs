//! Progressive hedging with sequential versus rayon-parallel subproblem
//! solves on the same four-item instance.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lotsizing::instance_gen::{generate_instance, grid, GenConfig};
use lotsizing::progressive_hedging::{run_ph_full, PhConfig};
use lotsizing::scenario::{build_tree, LumpySampler};
use lotsizing::solver::BuiltinBackend;
use lotsizing::Execution;

fn bench_ph(c: &mut Criterion) {
    let point = grid()[14];
    let instance = generate_instance(point, &GenConfig::tiny(4), 3, 14);
    let tree = build_tree(&instance, 2, &LumpySampler::from_instance(&instance), 3).expect("tree");
    let mut group = c.benchmark_group("ph_parallel");
    group.sample_size(10);
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get());
    for (label, execution) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::with_workers(workers)),
    ] {
        let config = PhConfig {
            max_iterations: 20,
            execution,
            ..PhConfig::default()
        };
        group.bench_with_input(BenchmarkId::new(label, tree.num_paths()), &config, |b, config| {
            b.iter(|| run_ph_full(&instance, &tree, config, &BuiltinBackend).expect("ph run"))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_ph);
criterion_main!(benches);
