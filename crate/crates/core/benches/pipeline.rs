use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use jjchar_core::breakdown::{detect_all, DEFAULT_FLOOR, DEFAULT_JUMP_FACTOR};
use jjchar_core::dataset::DatasetFile;
use jjchar_core::report::{analyze_many, AnalysisConfig};
use jjchar_core::synthetic::{generate_wafer, WaferSpec};
use jjchar_core::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn spec() -> WaferSpec {
    WaferSpec::preset("ref").unwrap()
}

fn generation(c: &mut Criterion) {
    let spec = spec();
    let mut g = c.benchmark_group("generate_wafer");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| generate_wafer(black_box(&spec), exec).unwrap())
        });
    }
    g.finish();
}

fn detection(c: &mut Criterion) {
    let ramps = generate_wafer(&spec(), Exec::default()).unwrap().ramps;
    let mut g = c.benchmark_group("detect_all");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| detect_all(black_box(&ramps), DEFAULT_JUMP_FACTOR, DEFAULT_FLOOR, exec))
        });
    }
    g.finish();
}

fn analysis(c: &mut Criterion) {
    let datasets: Vec<DatasetFile> = ["ref", "etch10", "etch20", "etch30"]
        .iter()
        .map(|n| DatasetFile::from_synthetic(&generate_wafer(&WaferSpec::preset(n).unwrap(), Exec::default()).unwrap()))
        .collect();
    let config = AnalysisConfig::default();
    let mut g = c.benchmark_group("analyze_many");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| analyze_many(black_box(&datasets), &config, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, generation, detection, analysis);
criterion_main!(benches);
