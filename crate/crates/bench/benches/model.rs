use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sim2real_core::convcnp::{ConvCnp, ModelConfig};
use sim2real_core::taskgen::{Task, TaskKind};
use sim2real_core::{GriddedField, PointSet};

fn task_for(model: &ConvCnp, n_points: usize) -> Task {
    let cfg = model.config();
    let dim = cfg.input_dim;
    let coords = |step: f64| (0..n_points * dim).map(|i| (i as f64 * step) % 1.0).collect::<Vec<_>>();
    let ctx = PointSet::new(dim, coords(0.031), vec![0.5; n_points]);
    let tgt = PointSet::new(dim, coords(0.017), vec![-0.25; n_points]);
    let g = model.grid();
    let aux = GriddedField {
        origin: g.origin.clone(),
        spacing: g.spacing,
        shape: g.shape.clone(),
        values: vec![0.1; g.n_nodes()],
    };
    Task::new(0, TaskKind::Train, ctx, tgt).with_aux(Arc::from(vec![aux; cfg.n_aux_channels]))
}

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("convcnp");
    group.sample_size(20);
    for (name, cfg) in [("desk_1d", ModelConfig::desk_1d()), ("compact_2d", ModelConfig::compact_2d())] {
        let model = ConvCnp::new(cfg, 1).unwrap();
        let task = task_for(&model, 30);
        group.bench_with_input(BenchmarkId::new("predict", name), &task, |b, t| {
            b.iter(|| model.predict(black_box(t)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("loss_and_grad", name), &task, |b, t| {
            b.iter(|| model.task_loss_and_grad(black_box(t)).unwrap())
        });
    }
    group.finish();
}

fn batch_gradient(c: &mut Criterion) {
    let model = ConvCnp::new(ModelConfig::desk_1d(), 1).unwrap();
    let batch: Vec<Task> = (0..16).map(|i| task_for(&model, 10 + i)).collect();
    c.bench_function("convcnp/batch16_gradient/desk_1d", |b| {
        b.iter(|| model.param_gradients(black_box(&batch)).unwrap())
    });
}

criterion_group!(benches, forward_backward, batch_gradient);
criterion_main!(benches);
