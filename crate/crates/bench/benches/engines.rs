//! Engine throughput and decoder benchmarks.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use armsim_bench::{arithmetic_loop_sim, arithmetic_loop_state};
use armsim_core::catalog::Catalog;
use armsim_core::decoder::decode;
use armsim_core::sim::ref_run;

fn engine_throughput(c: &mut Criterion) {
    let cat = Catalog::bundled();
    let mut group = c.benchmark_group("engine");

    let steps = 100_000u64;
    group.throughput(Throughput::Elements(steps));
    group.bench_function(BenchmarkId::new("fast", steps), |b| {
        let mut sim = arithmetic_loop_sim(cat);
        sim.run(1_000); // warm the block cache
        b.iter(|| sim.run(steps));
    });

    let ref_steps = 2_000u64;
    group.throughput(Throughput::Elements(ref_steps));
    group.bench_function(BenchmarkId::new("reference", ref_steps), |b| {
        b.iter(|| {
            let st = arithmetic_loop_state(cat);
            ref_run(cat, st, ref_steps)
        });
    });

    group.finish();
}

fn decoder_throughput(c: &mut Criterion) {
    let cat = Catalog::bundled();
    let words: Vec<u32> = (0..4096u32).map(|i| i.wrapping_mul(0x9E37_79B9)).collect();
    let mut group = c.benchmark_group("decoder");
    group.throughput(Throughput::Elements(words.len() as u64));
    group.bench_function("decode", |b| {
        b.iter(|| words.iter().filter(|&&w| decode(cat, w).is_some()).count())
    });
    group.finish();
}

criterion_group!(benches, engine_throughput, decoder_throughput);
criterion_main!(benches);
