use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qnnv_bench::{grid_points, motivating, robustness_case};
use qnnv_core::domain::{ActivationTables, TableConfig};
use qnnv_core::interval::propagate;
use qnnv_core::pipeline::{build_program, verify, VerifyOptions};
use qnnv_core::smt::emit_smtlib;
use qnnv_core::{build_table, default_spec, fxp_mult, ActivationKind, Domain, Executor, FxpFormat, FxpValue, RoundingMode};

fn q(k: u32, l: u32) -> Domain {
    Domain::fixed(FxpFormat::new(k, l).unwrap(), RoundingMode::TruncateTowardNegInf)
}

fn fixed_arithmetic(c: &mut Criterion) {
    let f = FxpFormat::new(16, 16).unwrap();
    let xs: Vec<FxpValue> = (0..1024).map(|i| FxpValue::from_raw(i * 977 - 500_000, f)).collect();
    c.bench_function("fxp_mult Q16.16 x1024", |b| {
        b.iter(|| {
            xs.windows(2)
                .map(|w| fxp_mult(w[0], w[1], RoundingMode::NearestTiesTowardZero).raw())
                .fold(0i64, i64::wrapping_add)
        })
    });
}

fn lookup_tables(c: &mut Criterion) {
    let spec = default_spec(&ActivationKind::Sigmoid, 20.0).unwrap();
    c.bench_function("sigmoid table eps 0.01", |b| b.iter(|| build_table(black_box(&spec), 0.01).unwrap()));
}

fn executor(c: &mut Criterion) {
    let (net, prop) = robustness_case(7, &[16, 24, 24, 10], 0.1);
    let tables = ActivationTables::for_network(&net, &TableConfig::default()).unwrap();
    let pts = grid_points(&prop.input_region, 32);
    let mut g = c.benchmark_group("forward x32");
    // exact rationals grow layer by layer, so the real domain is slow
    g.sample_size(10);
    for d in [Domain::Real, Domain::Float32, q(8, 8)] {
        let exec = Executor::new(&net, d, &tables).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(d), &pts, |b, pts| {
            b.iter(|| pts.iter().map(|x| exec.run_f64(x).unwrap().outputs.len()).sum::<usize>())
        });
    }
    g.finish();
}

fn intervals(c: &mut Criterion) {
    let (net, prop) = robustness_case(3, &[16, 24, 24, 10], 0.1);
    let tables = ActivationTables::default();
    let mut g = c.benchmark_group("propagate");
    for d in [Domain::Real, q(8, 8)] {
        g.bench_function(d.to_string(), |b| b.iter(|| propagate(&net, &prop.input_region, d, &tables).unwrap()));
    }
    g.finish();
}

fn encoding(c: &mut Criterion) {
    let (net, prop) = robustness_case(5, &[8, 16, 16, 4], 0.05);
    let mut g = c.benchmark_group("encode Q8.8");
    for (name, on) in [("unoptimized", false), ("optimized", true)] {
        let opts = VerifyOptions {
            domain: q(8, 8),
            simplify: on,
            slice: on,
            balance: on,
            intervals: on,
            ..VerifyOptions::default()
        };
        g.bench_function(name, |b| b.iter(|| emit_smtlib(&build_program(&net, &prop, &opts).unwrap()).unwrap().len()));
    }
    g.finish();
}

fn end_to_end(c: &mut Criterion) {
    let (net, prop) = motivating();
    let opts = VerifyOptions { domain: q(4, 6), ..VerifyOptions::default() };
    let mut g = c.benchmark_group("verify");
    g.sample_size(10);
    g.bench_function("motivating Q4.6 with solver", |b| b.iter(|| verify(&net, &prop, &opts).unwrap().verdict));
    g.finish();
}

criterion_group!(benches, fixed_arithmetic, lookup_tables, executor, intervals, encoding, end_to_end);
criterion_main!(benches);
