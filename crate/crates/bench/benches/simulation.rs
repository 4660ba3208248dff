use std::io;

use criterion::{criterion_group, criterion_main, Criterion};
use geokey_bench::{bench_deriver, cell};
use geokey_core::authzsim::scenarios::{adversary, stationary};
use geokey_core::authzsim::Simulation;

fn simulation(c: &mut Criterion) {
    let d = bench_deriver();
    let mut g = c.benchmark_group("authzsim");
    g.sample_size(20);
    let buoy = stationary(&d, cell(), 20_000);
    g.bench_function("stationary_1h", |b| {
        b.iter(|| Simulation::new(&buoy).unwrap().run(&mut io::sink()).unwrap())
    });
    let intruder = adversary(&d, cell(), 20_000, 100);
    g.bench_function("adversary_100", |b| {
        b.iter(|| Simulation::new(&intruder).unwrap().run(&mut io::sink()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, simulation);
criterion_main!(benches);
