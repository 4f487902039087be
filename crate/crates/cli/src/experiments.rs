use std::collections::BTreeMap;

use paracflow::cbo::{build_surrogate, kt_trial, mean_std, run_bo, BoConfig, BoTrace, ContextualProblem, Family, KtReport, Strategy};
use paracflow::diffeo::{decompose_near_identity, testmaps::bump_field_map, GridSpec};
use paracflow::flows::{Checkpoint, ParaCFlowModel};
use paracflow::numkit::{derive_seed, Parameterized};
use paracflow::taiji::{
    composition_region_agreement, derivative_report, eliminate_taiji, gen_taiji_dataset, prediction_grid,
    run_baseline_comparison, test_rmse, train_taiji_flow, RegionLabel, TaijiFlowConfig, TaijiMode,
};
use paracflow::Mat;
use serde::Serialize;

use crate::config::{Experiment, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{context_hash, fmt_f64, run_jobs, OutDir};
use crate::verify::run_verify;

/// Runs the configured experiment and returns one summary line per phase.
pub fn run(cfg: &RunConfig) -> CliResult<Vec<String>> {
    cfg.validate()?;
    let out = OutDir::create(&cfg.out_dir)?;
    match cfg.experiment {
        Experiment::Taiji => run_taiji(cfg, &out),
        Experiment::TaijiCompare => run_taiji_compare(cfg, &out),
        Experiment::Bo => run_bo_experiment(cfg, &out),
        Experiment::Kt => run_kt(cfg, &out),
        Experiment::Decomp => run_decomp(cfg, &out),
        Experiment::Verify => {
            let report = run_verify(cfg.seed);
            out.write_csv(
                "verify.csv",
                &["suite", "passed", "detail"],
                report.iter().map(|r| vec![r.suite.to_string(), r.passed.to_string(), r.detail.clone()]),
            )?;
            let lines: Vec<String> = report.iter().map(|r| r.line()).collect();
            if let Some(bad) = report.iter().find(|r| !r.passed) {
                for l in &lines {
                    println!("{l}");
                }
                return Err(CliError::Verify(format!("{}: {}", bad.suite, bad.detail)));
            }
            Ok(lines)
        }
    }
}

fn tag(y: f64) -> String {
    format!("{y}").replace('.', "p").replace('-', "m")
}

#[derive(Serialize)]
struct TaijiReport {
    seed: u64,
    params: usize,
    final_loss: f64,
    test_rmse_interior: f64,
    composition_agreement: f64,
    derivative: Vec<paracflow::taiji::DerivativeSummary>,
    elimination: Option<paracflow::taiji::EliminationReport>,
    checkpoint_roundtrip: bool,
}

fn run_taiji(cfg: &RunConfig, out: &OutDir) -> CliResult<Vec<String>> {
    let t = &cfg.taiji;
    let seed = cfg.seed;
    let mut lines = Vec::new();
    let train = gen_taiji_dataset(t.samples, derive_seed(seed, 1), TaijiMode::Scalar)?;
    let test = gen_taiji_dataset(t.test_samples, derive_seed(seed, 2), TaijiMode::Scalar)?;
    let flow_seed = derive_seed(seed, 3);
    let fc = TaijiFlowConfig {
        seed: flow_seed,
        train: paracflow::TrainConfig { seed: derive_seed(seed, 4), ..t.flow.train.clone() },
        ..t.flow.clone()
    };
    let (model, trace) = train_taiji_flow(&train, &fc)?;
    let final_loss = trace.last().copied().unwrap_or(f64::NAN);
    out.write_csv(
        &format!("taiji_loss_seed{seed}.csv"),
        &["epoch", "loss"],
        trace.iter().enumerate().map(|(i, l)| vec![(i + 1).to_string(), fmt_f64(*l)]),
    )?;
    let ckpt = out.path(&format!("taiji_model_seed{seed}.json"));
    paracflow::flows::save_checkpoint(&model, &ckpt)?;
    let roundtrip = checkpoint_roundtrip(&ckpt)?.identical;
    let rmse = test_rmse(&model, &test, 0.9)?;
    lines.push(format!("taiji train: loss {final_loss:.3e}, rmse(rho<0.9) {rmse:.4}, checkpoint {}", ckpt.display()));

    let mut derivative = Vec::new();
    for &y in &t.params {
        let grid = prediction_grid(&model, y, t.grid_points)?;
        out.write_csv(
            &format!("taiji_grid_y{}_seed{seed}.csv", tag(y)),
            &["x1", "x2", "f1", "f2", "region"],
            (0..grid.rows()).map(|i| {
                let r = grid.row(i);
                let mut row: Vec<String> = r.iter().map(|v| fmt_f64(*v)).collect();
                row.push(RegionLabel::of(&r[..2]).as_str().to_string());
                row
            }),
        )?;
        let d = derivative_report(&model, y, t.derivative_points)?;
        out.write_csv(
            &format!("taiji_derivative_y{}_seed{seed}.csv", tag(y)),
            &[
                "x1", "x2", "dist_to_circle", "m_dx11", "m_dx12", "m_dx21", "m_dx22", "t_dx11", "t_dx12", "t_dx21", "t_dx22",
                "m_dy1", "m_dy2", "t_dy1", "t_dy2", "rel_error",
            ],
            d.rows.iter().map(|r| {
                let mut row: Vec<String> = r.x.iter().chain([r.dist_to_circle].iter()).map(|v| fmt_f64(*v)).collect();
                row.extend(r.model_dx.iter().chain(&r.true_dx).chain(&r.model_dy).chain(&r.true_dy).map(|v| fmt_f64(*v)));
                row.push(fmt_f64(r.relative_error()));
                row
            }),
        )?;
        lines.push(format!(
            "taiji derivative y={y}: median relative error (rho<0.9) {:.4}",
            d.summary.median_rel_error_interior
        ));
        derivative.push(d.summary);
    }
    let composition_agreement = composition_region_agreement(&model, 1.0, 2, t.grid_points)?;
    lines.push(format!("taiji composition: region agreement {composition_agreement:.4}"));

    let elimination = if t.eliminate {
        let ec = paracflow::flows::EliminatorConfig {
            seed: derive_seed(seed, 5),
            train: paracflow::TrainConfig { seed: derive_seed(seed, 6), ..t.eliminator.train.clone() },
            ..t.eliminator.clone()
        };
        let (_, r) = eliminate_taiji(&model, &train, &test, &ec)?;
        lines.push(format!(
            "taiji eliminator: mean |o| {:.4}, median reconstruction error {:.4}",
            r.mean_residual_norm, r.median_reconstruction_error
        ));
        Some(r)
    } else {
        None
    };
    let report = TaijiReport {
        seed,
        params: model.param_count(),
        final_loss,
        test_rmse_interior: rmse,
        composition_agreement,
        derivative,
        elimination,
        checkpoint_roundtrip: roundtrip,
    };
    out.write_json(&format!("taiji_report_seed{seed}.json"), &report)?;
    Ok(lines)
}

fn run_taiji_compare(cfg: &RunConfig, out: &OutDir) -> CliResult<Vec<String>> {
    let seed = cfg.seed;
    let cc = paracflow::taiji::CompareConfig { seed, ..cfg.compare.clone() };
    let report = run_baseline_comparison(&cc)?;
    out.write_csv(
        &format!("compare_summary_seed{seed}.csv"),
        &["model", "params", "final_loss", "test_rmse_interior"],
        report.models.iter().map(|m| {
            vec![m.model.as_str().into(), m.params.to_string(), fmt_f64(m.final_loss), fmt_f64(m.test_rmse_interior)]
        }),
    )?;
    out.write_csv(
        &format!("compare_coverage_seed{seed}.csv"),
        &["model", "y", "interior_coverage"],
        report.grids.iter().map(|g| vec![g.model.as_str().into(), fmt_f64(g.y), fmt_f64(g.interior_coverage)]),
    )?;
    for g in &report.grids {
        out.write_csv(
            &format!("compare_grid_{}_y{}_seed{seed}.csv", g.model.as_str(), tag(g.y)),
            &["x1", "x2", "f1", "f2", "region"],
            (0..g.points.rows()).map(|i| {
                let mut row: Vec<String> = g.points.row(i).iter().map(|v| fmt_f64(*v)).collect();
                row.push(g.regions[i].as_str().to_string());
                row
            }),
        )?;
    }
    let mut lines: Vec<String> = report
        .models
        .iter()
        .map(|m| format!("compare {}: rmse(rho<0.9) {:.4}, {} params", m.model.as_str(), m.test_rmse_interior, m.params))
        .collect();
    lines.extend(
        report
            .grids
            .iter()
            .map(|g| format!("compare {} y={}: interior coverage {:.3}", g.model.as_str(), g.y, g.interior_coverage)),
    );
    Ok(lines)
}

/// One BO trial: `(context_dim, family, strategy, trial)`.
#[derive(Clone, Copy, Debug)]
pub struct BoJob {
    pub context_dim: usize,
    pub family: Family,
    pub strategy: Strategy,
    pub trial: usize,
}

/// Seed shared by every family and strategy at a given `(context_dim, trial)`.
pub fn bo_trial_seed(seed: u64, context_dim: usize, trial: usize) -> u64 {
    derive_seed(derive_seed(seed, context_dim as u64), trial as u64)
}

pub fn run_bo_job(cfg: &RunConfig, job: BoJob) -> paracflow::Result<BoTrace> {
    let b = &cfg.bo;
    let problem = ContextualProblem::new(b.benchmark, job.context_dim)?.with_sense(b.sense);
    let s = bo_trial_seed(cfg.seed, job.context_dim, job.trial);
    let mut ens = build_surrogate(job.family, job.context_dim, derive_seed(s, 1))?;
    let bc = BoConfig {
        total_steps: b.total_steps,
        init_steps: b.init_steps,
        refit_every: b.refit_every,
        refit_data: b.refit_data,
        strategy: job.strategy,
    };
    run_bo(&problem, &mut ens, &bc, s)
}

fn run_bo_experiment(cfg: &RunConfig, out: &OutDir) -> CliResult<Vec<String>> {
    let b = &cfg.bo;
    let mut jobs = Vec::new();
    for &context_dim in &b.context_dims {
        for &family in &b.families {
            for &strategy in &b.strategies {
                for trial in 0..b.trials {
                    jobs.push(BoJob { context_dim, family, strategy, trial });
                }
            }
        }
    }
    let results = run_jobs(jobs.clone(), cfg.workers, |job| run_bo_job(cfg, job));
    let bench = b.benchmark.as_str();
    let mut groups: BTreeMap<(usize, Family, &'static str), Vec<BoTrace>> = BTreeMap::new();
    let mut finals = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        let trace = res?;
        out.write_csv(
            &format!("bo_{bench}_dc{}_{}_{}_trial{}.csv", job.context_dim, job.family.as_str(), job.strategy.name(), job.trial),
            &["step", "context_hash", "action", "value", "regret", "cumulative_regret"],
            trace.steps.iter().map(|s| {
                vec![
                    s.step.to_string(),
                    context_hash(&s.context),
                    fmt_f64(s.action),
                    fmt_f64(s.value),
                    fmt_f64(s.regret),
                    fmt_f64(s.cumulative_regret),
                ]
            }),
        )?;
        finals.push(vec![
            job.context_dim.to_string(),
            job.family.as_str().into(),
            job.strategy.name().into(),
            job.trial.to_string(),
            fmt_f64(trace.final_cumulative_regret()),
        ]);
        groups.entry((job.context_dim, job.family, job.strategy.name())).or_default().push(trace);
    }
    out.write_csv(
        &format!("bo_{bench}_final.csv"),
        &["context_dim", "family", "strategy", "trial", "final_cumulative_regret"],
        finals,
    )?;
    let mut lines = Vec::new();
    for ((dc, family, strategy), traces) in &groups {
        let steps = traces[0].steps.len();
        out.write_csv(
            &format!("bo_{bench}_dc{dc}_{}_{strategy}_summary.csv", family.as_str()),
            &["step", "mean_cumulative_regret", "std_cumulative_regret"],
            (0..steps).map(|i| {
                let v: Vec<f64> = traces.iter().map(|t| t.steps[i].cumulative_regret).collect();
                let (m, s) = mean_std(&v);
                vec![(i + 1).to_string(), fmt_f64(m), fmt_f64(s)]
            }),
        )?;
        let v: Vec<f64> = traces.iter().map(|t| t.final_cumulative_regret()).collect();
        let (m, s) = mean_std(&v);
        lines.push(format!(
            "bo {bench} d_c={dc} {} {strategy}: final cumulative regret {m:.2} ± {s:.2} over {} trials",
            family.as_str(),
            traces.len()
        ));
    }
    Ok(lines)
}

fn run_kt(cfg: &RunConfig, out: &OutDir) -> CliResult<Vec<String>> {
    let kc = paracflow::cbo::KtConfig { seed: cfg.seed, ..cfg.kt.clone() };
    let mut jobs = Vec::new();
    for &family in &kc.families {
        for &size in &kc.sizes {
            for trial in 0..kc.trials {
                jobs.push((family, size, trial));
            }
        }
    }
    let results = run_jobs(jobs, cfg.workers, |(f, s, t)| kt_trial(&kc, f, s, t));
    let report = KtReport::from_entries(results.into_iter().collect::<paracflow::Result<Vec<_>>>()?);
    write_kt(out, &report, cfg.seed)?;
    Ok(report
        .summary
        .iter()
        .map(|s| format!("kt {} n={}: {:.4} ± {:.4}", s.family.as_str(), s.size, s.mean, s.std))
        .collect())
}

pub fn write_kt(out: &OutDir, report: &KtReport, seed: u64) -> CliResult<()> {
    out.write_csv(
        &format!("kt_report_seed{seed}.csv"),
        &["family", "size", "trial", "mean_kt", "min_kt", "max_kt", "flagged"],
        report.entries.iter().map(|e| {
            vec![
                e.family.as_str().into(),
                e.size.to_string(),
                e.trial.to_string(),
                fmt_f64(e.mean_kt),
                fmt_f64(e.min_kt),
                fmt_f64(e.max_kt),
                e.flagged.to_string(),
            ]
        }),
    )?;
    out.write_csv(
        &format!("kt_summary_seed{seed}.csv"),
        &["family", "size", "mean_kt", "std_kt"],
        report.summary.iter().map(|s| vec![s.family.as_str().into(), s.size.to_string(), fmt_f64(s.mean), fmt_f64(s.std)]),
    )?;
    Ok(())
}

fn run_decomp(cfg: &RunConfig, out: &OutDir) -> CliResult<Vec<String>> {
    let d = &cfg.decomp;
    let mut jobs = Vec::new();
    for &dim in &d.dims {
        for i in 0..d.maps {
            jobs.push((dim, i));
        }
    }
    let results = run_jobs(jobs.clone(), cfg.workers, |(dim, i)| -> paracflow::Result<_> {
        let f = bump_field_map(dim, derive_seed(derive_seed(cfg.seed, dim as u64), i as u64), d.delta)?;
        let grid = GridSpec::cube(dim, -1.0, 1.0, d.grid_points)?;
        Ok(decompose_near_identity(&f, &grid)?.report)
    });
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut worst: BTreeMap<usize, f64> = BTreeMap::new();
    for ((dim, i), r) in jobs.into_iter().zip(results) {
        let r = r?;
        let excess = r.levels.iter().filter_map(|l| l.amplification_excess).fold(f64::NEG_INFINITY, f64::max);
        rows.push(vec![
            dim.to_string(),
            i.to_string(),
            fmt_f64(r.levels[0].delta),
            r.levels.len().to_string(),
            fmt_f64(r.reconstruction_error),
            fmt_f64(excess),
        ]);
        let w = worst.entry(dim).or_insert(0.0);
        *w = w.max(r.reconstruction_error);
        reports.push(r);
    }
    out.write_csv(
        &format!("decomp_seed{}.csv", cfg.seed),
        &["dim", "map", "delta", "factors", "reconstruction_error", "max_amplification_excess"],
        rows,
    )?;
    out.write_json(&format!("decomp_reports_seed{}.json", cfg.seed), &reports)?;
    Ok(worst.iter().map(|(dim, e)| format!("decomp d={dim}: {} maps, worst reconstruction error {e:.3e}", d.maps)).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrip {
    pub identical: bool,
    pub max_param_diff: f64,
    pub max_output_diff: f64,
}

/// Load, re-serialize, load again; compares parameters and a fixed probe batch.
pub fn checkpoint_roundtrip(path: &std::path::Path) -> CliResult<RoundTrip> {
    let text = std::fs::read_to_string(path)?;
    let first = Checkpoint::from_json(&text)?.into_model()?;
    let again = Checkpoint::from_json(&Checkpoint::from_model(&first).to_json()?)?.into_model()?;
    let (p, q) = (first.flat_params(), again.flat_params());
    let max_param_diff = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (c, a) = probe_batch(&first);
    let (y1, y2) = (first.features_batch(&c, &a)?, again.features_batch(&c, &a)?);
    let max_output_diff = y1.data().iter().zip(y2.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let identical = p.len() == q.len()
        && p.iter().zip(&q).all(|(a, b)| a.to_bits() == b.to_bits())
        && y1.data().iter().zip(y2.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    Ok(RoundTrip { identical, max_param_diff, max_output_diff })
}

fn probe_batch(model: &ParaCFlowModel) -> (Mat, Mat) {
    let cfg = model.config();
    let n = 16;
    let c = Mat::from_fn(n, cfg.context_dim, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
    let a = Mat::from_fn(n, cfg.action_dim, |i, j| ((i * 5 + j * 2) % 13) as f64 / 6.0 - 1.0);
    (c, a)
}
