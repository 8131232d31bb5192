use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use chcbf::harness::experiments::ensemble_study;
use chcbf::harness::RunConfig;
use chcbf::parallel::Execution;

fn config() -> RunConfig {
    let mut c = RunConfig::default();
    c.domain.modes = 16;
    c.experiment.t_final = 0.02;
    c
}

fn ensemble(c: &mut Criterion) {
    let cfg = config();
    let mut group = c.benchmark_group("ensemble_16_paths");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| ensemble_study(&cfg, 16, exec).expect("ensemble runs"))
        });
    }
    group.finish();
}

fn stepping(c: &mut Criterion) {
    let mut cfg = config();
    cfg.domain.modes = 32;
    let stepper = cfg.stepper().expect("valid config");
    let x = chcbf::harness::initial::initial_state(&cfg.initial, *stepper.domain())
        .expect("valid data");
    c.bench_function("run_32_modes_20_steps", |b| {
        b.iter(|| {
            chcbf::stepper::run(&stepper, &x, &chcbf::stepper::RunOptions::new(0.02))
                .expect("run completes")
        })
    });
}

criterion_group!(benches, ensemble, stepping);
criterion_main!(benches);
