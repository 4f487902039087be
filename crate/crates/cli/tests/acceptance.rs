//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use paracflow::cbo::{benchmark_eval, build_net, mean_std, BenchmarkKind, Family, KtConfig, KtReport, SurrogateNet};
use paracflow::diffeo::testmaps::bump_field_map;
use paracflow::diffeo::{
    approximate_single_coordinate, decompose_near_identity, AnalyticPadded, GridSpec, PaddedConfig, SingleCoordinateFactor,
};
use paracflow::numkit::{derive_seed, fd_gradient, fd_jacobian, numerical_rank, rng_for, Parameterized};
use paracflow::taiji::{
    composition_region_agreement, derivative_report, eliminate_taiji, gen_taiji_dataset, taiji_apply, taiji_dy, test_rmse,
    train_taiji_flow, TaijiFlowConfig, TaijiMode,
};
use paracflow::{Activation, Mat, MlpNet, ParaCFlowConfig, ParaCFlowModel, TrainConfig};
use paracflow_cli::config::taiji_eliminator;
use paracflow_cli::experiments::{run_bo_job, BoJob};
use paracflow_cli::{run, RunConfig};
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let took = t.elapsed();
    let in_time = took <= budget;
    let passed = out.passed && in_time;
    println!(
        "{} criterion {id} ({name}): {}; {:.1}s of {}s{}",
        if passed { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { " (over budget)" }
    );
    passed
}

fn random_flow_config<R: Rng>(rng: &mut R, max_width: usize, head: bool) -> ParaCFlowConfig {
    let action_dim = rng.random_range(1..=3);
    ParaCFlowConfig {
        action_dim,
        context_dim: rng.random_range(0..=4),
        width: rng.random_range(action_dim + 1..=max_width),
        n_layers: rng.random_range(1..=6),
        cond_hidden: vec![rng.random_range(2..=8)],
        head_hidden: head.then(|| vec![rng.random_range(2..=6)]),
        activation: Activation::Tanh,
        identity_init: false,
        zero_ascend: false,
        train_ascend: true,
    }
}

fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn invertibility() -> Outcome {
    let mut rng = rng_for(1, 0);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let cfg = random_flow_config(&mut rng, 16, false);
        let model = ParaCFlowModel::new(cfg.clone(), k).unwrap();
        let c = uniform(&mut rng, cfg.context_dim, -2.0, 2.0);
        let x = uniform(&mut rng, cfg.width, -2.0, 2.0);
        let back = model.body().inverse(&c, &model.body().forward(&c, &x).unwrap()).unwrap();
        worst = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    Outcome { passed: worst <= 1e-10, detail: format!("max round-trip error {worst:.2e} over 1000 bodies") }
}

fn relative_gap(g: &[f64], fd: &[f64]) -> f64 {
    let num = g.iter().zip(fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    num / fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8)
}

fn gradients() -> Outcome {
    let mut rng = rng_for(2, 0);
    let mut worst: f64 = 0.0;
    let mut kinds = BTreeMap::new();
    for k in 0..100u64 {
        let n = 3;
        let kind = match k % 4 {
            0 | 1 => {
                let cfg = random_flow_config(&mut rng, 8, k % 4 == 0);
                let model = ParaCFlowModel::new(cfg.clone(), k).unwrap();
                let c = Mat::from_fn(n, cfg.context_dim, |_, _| rng.random_range(-1.0..1.0));
                let a = Mat::from_fn(n, cfg.action_dim, |_, _| rng.random_range(-1.0..1.0));
                let p0 = model.flat_params();
                let gap = if cfg.head_hidden.is_some() {
                    let v = uniform(&mut rng, n, -1.0, 1.0);
                    let g = model.scalar_loss_grad(&c, &a, &v).unwrap().1;
                    let fd = fd_gradient(
                        |p| {
                            let mut m = model.clone();
                            m.set_flat_params(p).unwrap();
                            m.scalar_loss_grad(&c, &a, &v).unwrap().0
                        },
                        &p0,
                        1e-6,
                    );
                    relative_gap(&g, &fd)
                } else {
                    let t = Mat::from_fn(n, cfg.action_dim, |_, _| rng.random_range(-1.0..1.0));
                    let g = model.feature_loss_grad(&c, &a, &t).unwrap().1;
                    let fd = fd_gradient(
                        |p| {
                            let mut m = model.clone();
                            m.set_flat_params(p).unwrap();
                            m.feature_loss_grad(&c, &a, &t).unwrap().0
                        },
                        &p0,
                        1e-6,
                    );
                    relative_gap(&g, &fd)
                };
                worst = worst.max(gap);
                "paracflow"
            }
            2 => {
                let dims = [3, rng.random_range(2..=8), rng.random_range(2..=8), 2];
                let net = MlpNet::glorot(&dims, Activation::Tanh, &mut rng).unwrap();
                let x = Mat::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
                let y = Mat::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
                let g = paracflow::numkit::mlp_mse_grad(&net, &x, &y).unwrap().1;
                let fd = fd_gradient(
                    |p| {
                        let mut m = net.clone();
                        m.set_flat_params(p).unwrap();
                        paracflow::numkit::mlp_mse_grad(&m, &x, &y).unwrap().0
                    },
                    &net.flat_params(),
                    1e-6,
                );
                worst = worst.max(relative_gap(&g, &fd));
                "mlp"
            }
            _ => {
                let family = [Family::MlpAscend, Family::Resnet][(k / 4 % 2) as usize];
                let net: SurrogateNet = build_net(family, 2, k).unwrap();
                let x = Mat::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
                let y = uniform(&mut rng, n, -1.0, 1.0);
                let g = net.mse_grad(&x, &y).unwrap().1;
                let fd = fd_gradient(
                    |p| {
                        let mut m = net.clone();
                        m.set_flat_params(p).unwrap();
                        m.mse_grad(&x, &y).unwrap().0
                    },
                    &net.flat_params(),
                    1e-6,
                );
                worst = worst.max(relative_gap(&g, &fd));
                family.as_str()
            }
        };
        *kinds.entry(kind).or_insert(0) += 1;
    }
    Outcome { passed: worst <= 1e-5, detail: format!("max relative error {worst:.2e} over 100 nets {kinds:?}") }
}

fn action_rank(model: &ParaCFlowModel, c: &[f64], a: &[f64]) -> usize {
    let j = fd_jacobian(|x| model.features(c, x).unwrap(), a, 1e-6);
    numerical_rank(&j, 1e-8)
}

fn rank_preservation(taiji: &ParaCFlowModel) -> Outcome {
    let mut rng = rng_for(3, 0);
    let mut bad_random = 0;
    for k in 0..100 {
        let cfg = random_flow_config(&mut rng, 16, false);
        let model = ParaCFlowModel::new(cfg.clone(), k).unwrap();
        let c = uniform(&mut rng, cfg.context_dim, -2.0, 2.0);
        let a = uniform(&mut rng, cfg.action_dim, -2.0, 2.0);
        bad_random += (action_rank(&model, &c, &a) != cfg.action_dim) as usize;
    }
    let mut bad_taiji = 0;
    for _ in 0..100 {
        let y = [rng.random_range(0.0..1.0)];
        let x = uniform(&mut rng, 2, -1.0, 1.0);
        bad_taiji += (action_rank(taiji, &y, &x) != 2) as usize;
    }
    Outcome {
        passed: bad_random == 0 && bad_taiji == 0,
        detail: format!("rank-deficient points: random {bad_random}/100, Taiji-trained {bad_taiji}/100"),
    }
}

fn decomposition() -> Outcome {
    let mut worst_rec: f64 = 0.0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut wrong_count = 0;
    let mut errors = Vec::new();
    for (dim, points) in [(2usize, 50usize), (3, 50)] {
        let grid = GridSpec::cube(dim, -1.0, 1.0, points).unwrap();
        for i in 0..10 {
            let f = bump_field_map(dim, derive_seed(dim as u64, i), 0.1).unwrap();
            match decompose_near_identity(&f, &grid) {
                Ok(fac) => {
                    wrong_count += (fac.factors.len() != dim) as usize;
                    worst_rec = worst_rec.max(fac.report.reconstruction_error);
                    for l in &fac.report.levels {
                        if let Some(e) = l.amplification_excess {
                            worst_excess = worst_excess.max(e);
                        }
                    }
                }
                Err(e) => errors.push(e.to_string()),
            }
        }
    }
    Outcome {
        passed: errors.is_empty() && wrong_count == 0 && worst_rec <= 1e-6 && worst_excess <= 1e-6,
        detail: format!(
            "20 maps, wrong factor counts {wrong_count}, errors {}, max reconstruction {worst_rec:.2e}, max amplification excess {worst_excess:.2e}",
            errors.len()
        ),
    }
}

fn padded_pipeline() -> Outcome {
    let mut rng = rng_for(5, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let dim = rng.random_range(1..=3usize);
        let coord = rng.random_range(0..dim);
        let amp = rng.random_range(0.1..0.45);
        let freq = rng.random_range(0.5..2.0);
        let mix = uniform(&mut rng, dim, -1.0, 1.0);
        let tau = SingleCoordinateFactor::new(dim, coord, move |x: &[f64]| {
            let phase: f64 = x.iter().zip(&mix).enumerate().filter(|(j, _)| *j != coord).map(|(_, (v, m))| v * m).sum();
            x[coord] + amp * (freq * x[coord] + phase).sin() / freq
        })
        .unwrap();
        let padded = AnalyticPadded::new(tau.clone());
        for x in GridSpec::cube(dim, -2.0, 2.0, 9).unwrap().iter() {
            let z = padded.apply(&x).unwrap();
            let mut want = tau.apply(&x).unwrap();
            want.push(0.0);
            worst = want.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
    }
    let tau = SingleCoordinateFactor::new(1, 0, |x| x[0] + 0.3 * (-x[0] * x[0]).exp() * x[0].tanh()).unwrap();
    let grid = GridSpec::cube(1, -2.0, 2.0, 401).unwrap();
    let cfg = PaddedConfig { train: TrainConfig { epochs: 400, ..Default::default() }, ..Default::default() };
    let (_, report) = approximate_single_coordinate(&tau, &grid, &cfg).unwrap();
    Outcome {
        passed: worst <= 1e-9 && report.sup_error <= 1e-2,
        detail: format!("analytic max error {worst:.2e} over 10 maps, trained d=1 sup error {:.2e}", report.sup_error),
    }
}

fn groundtruth() -> Outcome {
    let mut rng = rng_for(6, 0);
    let (mut ident, mut semi, mut dy): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..20000 {
        let x = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
        let y1: f64 = rng.random_range(-1.0..1.0);
        let y2: f64 = rng.random_range(-1.0..1.0);
        let rho = f64::hypot(x[0], x[1]);
        let f0 = taiji_apply(0.0, &x);
        ident = ident.max((f0[0] - x[0]).abs()).max((f0[1] - x[1]).abs());
        if rho >= 1.0 {
            let f = taiji_apply(y1, &x);
            ident = ident.max((f[0] - x[0]).abs()).max((f[1] - x[1]).abs());
        }
        let a = taiji_apply(y1, &taiji_apply(y2, &x));
        let b = taiji_apply(y1 + y2, &x);
        semi = semi.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        if rho < 0.95 {
            let h = 1e-5;
            let (p, m) = (taiji_apply(y1 + h, &x), taiji_apply(y1 - h, &x));
            let d = taiji_dy(y1, &x).value;
            let fd = [(p[0] - m[0]) / (2.0 * h), (p[1] - m[1]) / (2.0 * h)];
            dy = dy.max(f64::hypot(d[0] - fd[0], d[1] - fd[1]) / f64::hypot(d[0], d[1]).max(1e-3));
        }
    }
    Outcome {
        passed: ident == 0.0 && semi <= 1e-12 && dy <= 1e-6,
        detail: format!("identity deviation {ident:.1e}, semigroup {semi:.1e}, dy vs fd {dy:.1e}"),
    }
}

fn taiji_training(model: &ParaCFlowModel, test: &paracflow::taiji::TaijiDataset) -> Outcome {
    let rmse = test_rmse(model, test, 0.9).unwrap();
    let derivs: Vec<f64> =
        [0.5, 1.0].iter().map(|&y| derivative_report(model, y, 41).unwrap().summary.median_rel_error_interior).collect();
    let worst = derivs.iter().copied().fold(0.0, f64::max);
    let agree = composition_region_agreement(model, 1.0, 2, 101).unwrap();
    Outcome {
        passed: rmse <= 0.05 && worst <= 0.2 && agree >= 0.9,
        detail: format!(
            "rmse {rmse:.4}, median derivative error y=0.5 {:.3} y=1 {:.3}, composition region agreement {agree:.3}",
            derivs[0], derivs[1]
        ),
    }
}

fn eliminator(model: &ParaCFlowModel, train: &paracflow::taiji::TaijiDataset, test: &paracflow::taiji::TaijiDataset) -> Outcome {
    let (_, r) = eliminate_taiji(model, train, test, &taiji_eliminator()).unwrap();
    Outcome {
        passed: r.mean_residual_norm <= 0.05 && r.median_reconstruction_error <= 0.1,
        detail: format!(
            "mean |o| {:.4}, median reconstruction error {:.4} (max {:.2})",
            r.mean_residual_norm, r.median_reconstruction_error, r.max_reconstruction_error
        ),
    }
}

fn benchmarks() -> Outcome {
    let a = benchmark_eval(BenchmarkKind::Ackley, &[0.0; 21]);
    let r = benchmark_eval(BenchmarkKind::Rastrigin, &[0.0; 21]);
    let t = benchmark_eval(BenchmarkKind::Trid, &[2.0, 2.0]);
    Outcome {
        passed: a.abs() <= 1e-12 && r.abs() <= 1e-12 && t == -2.0,
        detail: format!("ackley(0) {a:.1e}, rastrigin(0) {r:.1e}, trid(2, 2) {t}"),
    }
}

fn bo_ordering() -> Outcome {
    let cfg = RunConfig::from_json(
        r#"{"experiment": "bo", "seed": 2024, "bo": {
            "benchmark": "trid", "context_dims": [5, 20], "families": ["paracflow", "mlp"],
            "strategies": [{"kind": "lcb", "kappa": 1.0}], "trials": 5, "total_steps": 500}}"#,
    )
    .unwrap();
    let mut finals: BTreeMap<(usize, Family), Vec<f64>> = BTreeMap::new();
    for &context_dim in &cfg.bo.context_dims {
        for &family in &cfg.bo.families {
            for trial in 0..cfg.bo.trials {
                let job = BoJob { context_dim, family, strategy: cfg.bo.strategies[0], trial };
                let trace = run_bo_job(&cfg, job).unwrap();
                finals.entry((context_dim, family)).or_default().push(trace.final_cumulative_regret());
            }
        }
    }
    let mut parts = Vec::new();
    for ((dc, fam), v) in &finals {
        let (m, s) = mean_std(v);
        let trials: Vec<String> = v.iter().map(|x| format!("{x:.0}")).collect();
        parts.push(format!("d_c={dc} {} {m:.1}±{s:.1} [{}]", fam.as_str(), trials.join(" ")));
    }
    let mean = |f| mean_std(&finals[&(20, f)]).0;
    Outcome { passed: mean(Family::ParaCFlow) <= mean(Family::Mlp), detail: parts.join("; ") }
}

fn kt_ordering() -> Outcome {
    let cfg = KtConfig {
        benchmark: BenchmarkKind::Trid,
        context_dim: 20,
        trials: 5,
        test_contexts: 1000,
        families: vec![Family::ParaCFlow, Family::Mlp],
        seed: 2024,
        ..KtConfig::default()
    };
    let report: KtReport = paracflow::cbo::kt_experiment(&cfg).unwrap();
    let p = report.family_mean(Family::ParaCFlow).unwrap();
    let m = report.family_mean(Family::Mlp).unwrap();
    let sizes: Vec<String> =
        report.summary.iter().map(|s| format!("{} n={} {:.3}±{:.3}", s.family.as_str(), s.size, s.mean, s.std)).collect();
    Outcome { passed: p > m, detail: format!("mean KT paracflow {p:.4} vs mlp {m:.4}; {}", sizes.join(", ")) }
}

fn csvs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism() -> Outcome {
    let configs = [
        r#"{"experiment": "bo", "seed": 5, "bo": {"context_dims": [3], "families": ["paracflow", "mlp", "mlp_ascend", "resnet"],
            "strategies": [{"kind": "lcb", "kappa": 1.0}, {"kind": "thompson"}], "trials": 2, "total_steps": 60, "init_steps": 20, "refit_every": 20}}"#,
        r#"{"experiment": "kt", "seed": 5, "kt": {"context_dim": 3, "sizes": [50], "trials": 2, "test_contexts": 10}}"#,
        r#"{"experiment": "taiji", "seed": 5, "taiji": {"samples": 400, "test_samples": 100, "grid_points": 21,
            "derivative_points": 9, "flow": {"train": {"epochs": 5}}, "eliminator": {"train": {"epochs": 5}}}}"#,
        r#"{"experiment": "taiji_compare", "seed": 5, "compare": {"samples": 100, "test_samples": 20, "mlp_hidden": [8],
            "resnet_hidden": [8], "flow": {"hidden": 8}, "train": {"epochs": 2}, "grid_points": 11, "coverage_cells": 5}}"#,
        r#"{"experiment": "decomp", "seed": 5, "decomp": {"dims": [2], "maps": 2, "grid_points": 15}}"#,
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut files = 0;
    let mut mismatched = Vec::new();
    for (i, text) in configs.iter().enumerate() {
        let mut dirs = Vec::new();
        for (rep, workers) in [(0, 1), (1, 3)] {
            let mut cfg = RunConfig::from_json(text).unwrap();
            cfg.out_dir = tmp.path().join(format!("{i}_{rep}"));
            cfg.workers = workers;
            run(&cfg).unwrap();
            dirs.push(csvs(&cfg.out_dir));
        }
        files += dirs[0].len();
        if dirs[0] != dirs[1] || dirs[0].is_empty() {
            mismatched.push(RunConfig::from_json(text).unwrap().experiment.as_str());
        }
    }
    Outcome {
        passed: mismatched.is_empty(),
        detail: format!("{files} CSVs from 5 experiments re-run with a different worker count; mismatched {mismatched:?}"),
    }
}

fn main() {
    let secs = Duration::from_secs;
    let mut results = Vec::new();
    results.push(check(1, "invertibility", secs(10), invertibility));
    results.push(check(2, "gradient correctness", secs(30), gradients));

    let t = Instant::now();
    let train = gen_taiji_dataset(30000, 1, TaijiMode::Scalar).unwrap();
    let test = gen_taiji_dataset(5000, 2, TaijiMode::Scalar).unwrap();
    let (taiji, _) = train_taiji_flow(&train, &TaijiFlowConfig::default()).unwrap();
    let train_time = t.elapsed();

    results.push(check(3, "rank preservation", secs(60), || rank_preservation(&taiji)));
    results.push(check(4, "decomposition oracle", secs(300), decomposition));
    results.push(check(5, "padded single-coordinate pipeline", secs(300), padded_pipeline));
    results.push(check(6, "Taiji groundtruth", secs(5), groundtruth));
    results.push(check(7, "Taiji training", secs(1200).saturating_sub(train_time), || taiji_training(&taiji, &test)));
    results.push(check(8, "eliminator", secs(600), || eliminator(&taiji, &train, &test)));
    results.push(check(9, "benchmark sanity", secs(1), benchmarks));
    results.push(check(10, "BO ordering", secs(7200), bo_ordering));
    results.push(check(11, "KT ordering", secs(3600), kt_ordering));
    results.push(check(12, "determinism", secs(600), determinism));
    println!("Taiji model trained in {:.1}s (counted against criterion 7)", train_time.as_secs_f64());

    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
