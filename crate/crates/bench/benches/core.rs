use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mixreg::em::{em_fit, EmConfig};
use mixreg::optim::init_xavier;
use mixreg::DesignSet;
use mixreg_bench::{additive_data, linear_data, model_for};
use rand::SeedableRng;

fn objective_and_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("objective_and_gradient");
    for (name, data) in [("linear_m2_pm10", linear_data(2500, 2, 10)), ("additive_noise3", additive_data(3))] {
        let model = model_for(&data);
        let psi = init_xavier(model.design(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
        let mut grad = vec![0.0; psi.len()];
        let batch: Vec<usize> = (0..32).collect();
        let all = model.all_rows();
        group.bench_function(format!("{name}/batch32"), |b| {
            b.iter(|| model.objective_and_gradient(black_box(&psi), &batch, &mut grad).unwrap())
        });
        group.bench_function(format!("{name}/full"), |b| {
            b.iter(|| model.objective_and_gradient(black_box(&psi), &all, &mut grad).unwrap())
        });
    }
    group.finish();
}

fn design_build(c: &mut Criterion) {
    let data = additive_data(10);
    let spec = data.truth.spec.clone();
    c.bench_function("design_build/additive_noise10", |b| {
        b.iter(|| DesignSet::build(black_box(&spec), &data.covariates).unwrap())
    });
}

fn em(c: &mut Criterion) {
    let data = linear_data(300, 2, 2);
    let model = model_for(&data);
    let cfg = EmConfig { restarts: 1, ..EmConfig::default() };
    let mut group = c.benchmark_group("em");
    group.sample_size(10);
    group.bench_function("linear_n300_m2", |b| {
        b.iter_batched(|| cfg.clone(), |cfg| em_fit(&model, &cfg).unwrap(), BatchSize::SmallInput)
    });
    group.finish();
}

criterion_group!(benches, objective_and_gradient, design_build, em);
criterion_main!(benches);
