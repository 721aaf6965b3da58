use std::hint::black_box;

use assisted_mpc::mpc::{mpc_solve, MpcSpec, TerminalOptions};
use assisted_mpc::parallel;
use assisted_mpc::presets;
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;

fn spec() -> MpcSpec {
    MpcSpec::new(
        presets::ball_beam_model(),
        presets::ball_beam_cost(),
        presets::ball_beam_constraints(),
        TerminalOptions::default(),
        presets::default_horizons(),
    )
    .unwrap()
}

// One cycle of the horizon fan-out: a step set-point change seen from rest.
fn fanout(c: &mut Criterion) {
    let spec = spec();
    let x = DVector::from_vec(vec![0.0, 0.0, 0.0]);
    let sp = DVector::from_vec(vec![0.52, 0.0, 0.0]);
    spec.terminal_set(&sp).unwrap();
    let solve = |&n: &usize| mpc_solve(&spec, &x, &sp, n, None).unwrap().iterations;

    let mut g = c.benchmark_group("fanout_17_horizons");
    g.bench_function("sequential", |b| b.iter(|| black_box(parallel::map_sequential(&spec.horizons, solve))));
    #[cfg(feature = "parallel")]
    g.bench_function("parallel", |b| b.iter(|| black_box(parallel::map_parallel(&spec.horizons, solve))));
    g.finish();
}

criterion_group!(benches, fanout);
criterion_main!(benches);
