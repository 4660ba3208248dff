//! Streaming key derivation over a prefix of the grid. The full grid is
//! measured by `geokey bench keyspace`; here a prefix keeps runs short.

use std::io::{self, Write};

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use geokey_bench::{bench_deriver, epoch};
use geokey_core::authority::stream_keyspace;
use geokey_core::keystore::EntityId;

struct Sink(u64);

impl Write for Sink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0 += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn keyspace(c: &mut Criterion) {
    let d = bench_deriver();
    let t = epoch();
    let mut g = c.benchmark_group("keyspace");
    g.sample_size(10);
    for cells in [65_536u64, 262_144] {
        g.throughput(Throughput::Elements(cells));
        g.bench_function(format!("stream_{cells}_cells"), |b| {
            b.iter(|| stream_keyspace(&d, &t, EntityId([0; 16]), Some(cells), Sink(0)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, keyspace);
criterion_main!(benches);
