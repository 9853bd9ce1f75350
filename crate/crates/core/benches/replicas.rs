//! Replica fan-out: the sequential map against `map_replicas`, which runs on
//! rayon when the `parallel` feature is on (the default).

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use contactlab::parallel::{map_replicas, map_replicas_sequential};
use contactlab::process::{evolve, RunOptions};
use contactlab::{Configuration, Construction};

fn standard_batch(c: &mut Criterion) {
    let cons = Construction::new(42, 1.0, 2.0).unwrap();
    let opts = RunOptions::until(100.0).without_edges();
    let one = |replica: u64| {
        evolve(&cons, replica, &Configuration::standard(), &opts)
            .map(|t| t.final_state.infected_count)
            .unwrap()
    };
    let mut group = c.benchmark_group("standard process, 64 replicas to t = 100");
    group.sample_size(20);
    group.bench_function("sequential", |b| b.iter(|| black_box(map_replicas_sequential(0..64, one))));
    group.bench_function("map_replicas", |b| b.iter(|| black_box(map_replicas(0..64, one))));
    group.finish();
}

criterion_group!(benches, standard_batch);
criterion_main!(benches);
