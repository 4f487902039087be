use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use paracflow::cbo::{build_surrogate, kendall_tau, ContextualProblem, Family, Surrogate, BenchmarkKind};
use paracflow::numkit::rng_for;
use paracflow::taiji::{gen_taiji_dataset, TaijiFlowConfig, TaijiMode};
use paracflow::{Activation, Mat, ParaCFlowConfig, ParaCFlowModel};
use rand::Rng;

fn surrogate_model(context_dim: usize) -> ParaCFlowModel {
    let cfg = ParaCFlowConfig {
        action_dim: 1,
        context_dim,
        width: 4,
        n_layers: 3,
        cond_hidden: vec![64],
        head_hidden: Some(vec![64]),
        activation: Activation::Tanh,
        identity_init: false,
        zero_ascend: false,
        train_ascend: true,
    };
    ParaCFlowModel::new(cfg, 0).unwrap()
}

fn flow_passes(c: &mut Criterion) {
    let model = surrogate_model(20);
    let mut rng = rng_for(0, 0);
    let ctx: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = model.body().forward(&ctx, &x).unwrap();
    c.bench_function("body_forward_single", |b| b.iter(|| model.body().forward(black_box(&ctx), black_box(&x)).unwrap()));
    c.bench_function("body_inverse_single", |b| b.iter(|| model.body().inverse(black_box(&ctx), black_box(&y)).unwrap()));

    let n = 256;
    let cs = Mat::from_fn(n, 20, |_, _| rng.random_range(-1.0..1.0));
    let a = Mat::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    c.bench_function("predict_batch_256", |b| b.iter(|| model.predict_batch(black_box(&cs), black_box(&a)).unwrap()));
    c.bench_function("scalar_loss_grad_256", |b| b.iter(|| model.scalar_loss_grad(black_box(&cs), black_box(&a), &v).unwrap()));
}

fn taiji_epoch(c: &mut Criterion) {
    let data = gen_taiji_dataset(2000, 0, TaijiMode::Scalar).unwrap();
    let cfg = TaijiFlowConfig::default().flow_config(1);
    let features = data.to_features();
    let train = paracflow::TrainConfig { epochs: 1, ..Default::default() };
    let mut group = c.benchmark_group("taiji");
    group.sample_size(10);
    group.bench_function("one_epoch_2000", |b| {
        b.iter_batched(
            || ParaCFlowModel::new(cfg.clone(), 0).unwrap(),
            |mut m| m.train_features(&features, &train).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn acquisition(c: &mut Criterion) {
    let problem = ContextualProblem::new(BenchmarkKind::Trid, 20).unwrap();
    let mut ens = build_surrogate(Family::ParaCFlow, 20, 0).unwrap();
    ens.train.epochs = 2;
    let mut rng = rng_for(1, 0);
    let cs = Mat::from_fn(100, 20, |_, _| rng.random_range(-3.0..3.0));
    let a: Vec<f64> = (0..100).map(|_| rng.random_range(-3.0..3.0)).collect();
    let v: Vec<f64> = (0..100).map(|i| problem.value(cs.row(i), a[i]).unwrap()).collect();
    ens.fit(&cs, &a, &v).unwrap();
    let ctx = cs.row(0).to_vec();
    c.bench_function("ensemble_sweep_100", |b| b.iter(|| ens.member_sweep(black_box(&ctx), problem.grid()).unwrap()));

    let p: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
    c.bench_function("kendall_tau_100", |b| b.iter(|| kendall_tau(black_box(&p), black_box(&t)).unwrap()));
}

criterion_group!(benches, flow_passes, taiji_epoch, acquisition);
criterion_main!(benches);
