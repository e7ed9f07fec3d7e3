use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use exploitlab_bench::{fixture_contracts, fixture_sources};
use exploitlab_core::analyzer::analyze_all;
use exploitlab_core::lang::parse_contract;
use exploitlab_core::numeric::{checked_arith, wrap_arith};
use exploitlab_core::scenarios::run_scenario;
use exploitlab_core::{ArithKind, UInt};

fn arithmetic(c: &mut Criterion) {
    let a = UInt::u256_from_limbs([0x0123_4567_89ab_cdef, u64::MAX, 7, 1 << 62]);
    let b = UInt::u256_from_limbs([u64::MAX, 3, 0, 5]);
    let mut group = c.benchmark_group("arith");
    for kind in ArithKind::ALL {
        group.bench_function(BenchmarkId::new("wrap", kind.method()), |bench| {
            bench.iter(|| wrap_arith(kind, black_box(a), black_box(b)))
        });
        group.bench_function(BenchmarkId::new("checked", kind.method()), |bench| {
            bench.iter(|| checked_arith(kind, black_box(a), black_box(b)))
        });
    }
    group.finish();
}

fn parsing(c: &mut Criterion) {
    let sources = fixture_sources();
    c.bench_function("parse_fixtures", |bench| {
        bench.iter(|| {
            for (_, src) in &sources {
                black_box(parse_contract(black_box(src)).unwrap());
            }
        })
    });
}

fn scenarios(c: &mut Criterion) {
    let none = BTreeMap::new();
    let mut group = c.benchmark_group("scenario");
    for name in ["reentrancy_vulnerable", "overflow_bec"] {
        group.bench_function(name, |bench| bench.iter(|| run_scenario(black_box(name), &none).unwrap()));
    }
    group.finish();
}

fn analysis(c: &mut Criterion) {
    let contracts = fixture_contracts();
    c.bench_function("analyze_fixtures", |bench| bench.iter(|| analyze_all(black_box(&contracts))));
}

criterion_group!(benches, arithmetic, parsing, scenarios, analysis);
criterion_main!(benches);
