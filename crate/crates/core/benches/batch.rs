use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;

use cmab_core::instances::gen_spanning_tree_instance;
use cmab_core::{run_batch, Execution, PolicyKind, RunConfig, Stream};

fn batch(c: &mut Criterion) {
    let instance = gen_spanning_tree_instance(12, 0.6, false, &mut Stream::seed_from_u64(1)).unwrap();
    let mut group = c.benchmark_group("run_batch");
    group.sample_size(10);
    for policy in [PolicyKind::Cts, PolicyKind::Cucb, PolicyKind::CKlUcb] {
        let base = RunConfig::new(policy, 2_000, 0);
        for (label, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(label, policy.name()), &execution, |b, &execution| {
                b.iter(|| run_batch(&instance, &base, 8, 42, execution).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
