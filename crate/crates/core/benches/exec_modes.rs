//! Sequential against parallel execution for the three hot loops.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use drmlab::convolution::Method;
use drmlab::distributions::Model;
use drmlab::exec::Exec;
use drmlab::generators::MeasureGenerator;
use drmlab::histogram::GridSpec;
use drmlab::metrics::{d_alpha, MetricConfig};
use drmlab::montecarlo::{InitialCondition, Population};
use drmlab::operator::Operator;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn monte_carlo_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("mc_step_200k");
    for (name, exec) in MODES {
        let mut pop = Population::initial(InitialCondition::Uniform, 200_000, 1.0, Model::Drm, 1)
            .unwrap()
            .with_exec(exec);
        group.bench_function(name, |b| b.iter(|| pop.step().unwrap()));
    }
    group.finish();
}

fn operator_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("apply");
    group.sample_size(10);
    for (cells, method) in [
        (256, Method::Direct),
        (4096, Method::Fft),
        (16384, Method::Fft),
    ] {
        let grid = GridSpec::new(40.0, cells).unwrap();
        let p = MeasureGenerator::new(grid, 1.0, 2)
            .unwrap()
            .measure()
            .unwrap();
        for (name, exec) in MODES {
            let op = Operator::with_options(grid, method, exec);
            group.bench_with_input(BenchmarkId::new(name, cells), &p, |b, p| {
                b.iter(|| black_box(op.apply(p).unwrap()))
            });
        }
    }
    group.finish();
}

fn d_alpha_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("d_alpha_16384");
    let grid = GridSpec::new(40.0, 16384).unwrap();
    let ms = MeasureGenerator::new(grid, 1.0, 3)
        .unwrap()
        .measures(2)
        .unwrap();
    for (name, exec) in MODES {
        let cfg = MetricConfig {
            exec,
            ..Default::default()
        };
        group.bench_function(name, |b| {
            b.iter(|| black_box(d_alpha(&ms[0], &ms[1], &cfg).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo_step, operator_apply, d_alpha_scan);
criterion_main!(benches);
