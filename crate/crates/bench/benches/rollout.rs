//! Looped vs vectorized ensemble rollout throughput on the toy profile.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use climem_bench::toy_fixture;
use climem_core::rollout::{build_scenario, rollout, rollout_vectorized, RolloutSetup, ScenarioKind};

fn bench_rollout(c: &mut Criterion) {
    let (_cfg, ds, model) = toy_fixture();
    let setup = RolloutSetup {
        model: &model,
        prog_specs: &ds.prog_specs,
        forcing_specs: &ds.forcing_specs,
        statics_std: ds.statics_std().unwrap(),
    };
    let scen = build_scenario(&ds.f, &ds.months, ScenarioKind::Climatology, 0.0, 0, 7).unwrap();
    let init = ds.bundle(0).unwrap();

    let mut group = c.benchmark_group("rollout_20_members_6_months");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("looped", 20), |b| {
        b.iter(|| rollout(&setup, &init, &scen, 6, 20, 3).unwrap())
    });
    group.bench_function(BenchmarkId::new("vectorized", 20), |b| {
        b.iter(|| rollout_vectorized(&setup, &init, &scen, 6, 20, 3).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_rollout);
criterion_main!(benches);
