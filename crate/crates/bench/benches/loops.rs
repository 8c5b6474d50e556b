use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use looped_icl::attention::{attn_closed_form, attn_general, default_params};
use looped_icl::experiment::{run_experiment, ExperimentConfig};
use looped_icl::looped_tf::run_loops;
use looped_icl::spectral::sym_eigen;
use looped_icl::task::{assemble_prompt, make_task_seeded};
use looped_icl::LoopConfig;
use std::hint::black_box;

fn attention(c: &mut Criterion) {
    let mut group = c.benchmark_group("attention");
    for &(n, d) in &[(16, 4), (64, 4), (128, 16)] {
        let task = make_task_seeded(n, d, 1.0, 0).unwrap();
        let z = assemble_prompt(&task);
        let params = default_params(n, d);
        group.bench_with_input(
            BenchmarkId::new("general", format!("{n}x{d}")),
            &z,
            |b, z| b.iter(|| attn_general(black_box(z), &params).unwrap()),
        );
        group.bench_with_input(
            BenchmarkId::new("closed_form", format!("{n}x{d}")),
            &task,
            |b, t| b.iter(|| attn_closed_form(t.x(), t.y(), black_box(t.q0()), t.alpha()).unwrap()),
        );
    }
    group.finish();
}

fn loops(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_loops_T200");
    for &n in &[16, 128] {
        let task = make_task_seeded(n, 4, 1.0, 0).unwrap();
        let config = LoopConfig::inverse_smoothness(200);
        group.bench_with_input(BenchmarkId::from_parameter(n), &task, |b, t| {
            b.iter(|| run_loops(black_box(t), &config).unwrap())
        });
    }
    group.finish();
}

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("sym_eigen");
    for &d in &[4, 16, 64] {
        let gram = make_task_seeded(4 * d, d, 1.0, 0).unwrap().x().gram();
        group.bench_with_input(BenchmarkId::from_parameter(d), &gram, |b, g| {
            b.iter(|| sym_eigen(black_box(g)).unwrap())
        });
    }
    group.finish();
}

fn experiment(c: &mut Criterion) {
    let config = ExperimentConfig::default();
    c.bench_function("experiment_default", |b| {
        b.iter(|| run_experiment(black_box(&config), 0).unwrap())
    });
}

criterion_group!(benches, attention, loops, eigen, experiment);
criterion_main!(benches);
