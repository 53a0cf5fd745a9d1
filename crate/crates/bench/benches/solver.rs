use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use netspc_bench::{prepared, scenario};
use netspc_core::moments::{build_lifted, estimate_channel_moments};
use netspc_core::scenario::*;
use netspc_core::{ocp, sim, ProtocolKind, ProtocolSpec};

fn ocp_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("ocp_solve");
    for mu in [0.0, 1000.0] {
        let cfg = scenario(0.5, 1.0, ProtocolKind::Tp1, mu, 3);
        let prep = prepared(&cfg);
        let ctx = prep.stability_context();
        group.bench_with_input(BenchmarkId::from_parameter(mu), &mu, |b, _| {
            b.iter(|| ocp::solve(&prep.moments, &prep.lifted, black_box(&cfg.x0), &prep.ocp, ctx.as_ref(), None).unwrap())
        });
    }
    group.finish();
}

fn channel_moments(c: &mut Criterion) {
    let lifted = build_lifted(&example_a(), &example_b(), &example_q(), &example_qf(), &example_r(), EXAMPLE_N).unwrap();
    let mut group = c.benchmark_group("channel_moments");
    for kind in [ProtocolKind::Tp1, ProtocolKind::Tp2] {
        let spec = ProtocolSpec::new(kind, EXAMPLE_N, EXAMPLE_N_R).unwrap();
        group.bench_function(kind.as_str(), |b| b.iter(|| estimate_channel_moments(&lifted, &spec, black_box(0.5), 100_000, 1).unwrap()));
    }
    group.finish();
}

fn closed_loop(c: &mut Criterion) {
    // One recalculation interval: a solve plus three plant steps.
    let cfg = scenario(0.5, 1.0, ProtocolKind::Tp1, 1000.0, EXAMPLE_N_R);
    let prep = prepared(&cfg);
    c.bench_function("closed_loop_cycle", |b| b.iter(|| sim::run_path(&cfg, &prep, black_box(0)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = ocp_solve, channel_moments, closed_loop
}
criterion_main!(benches);
