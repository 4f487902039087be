use paracflow::cbo::{benchmark_eval, kendall_tau, BenchmarkKind};
use paracflow::diffeo::{decompose_near_identity, testmaps::sin_cos_bump_map, AnalyticPadded, GridSpec, SingleCoordinateFactor};
use paracflow::flows::Checkpoint;
use paracflow::numkit::{derive_seed, fd_gradient, rng_for, Parameterized};
use paracflow::taiji::{taiji_apply, taiji_dy};
use paracflow::{Activation, Mat, ParaCFlowConfig, ParaCFlowModel};
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.suite, self.detail)
    }
}

type Suite = fn(u64) -> paracflow::Result<(bool, String)>;

const SUITES: [(&str, Suite); 7] = [
    ("flow_invertibility", flow_invertibility),
    ("gradients", gradients),
    ("taiji_groundtruth", taiji_groundtruth),
    ("benchmarks", benchmarks),
    ("kendall_tau", kendall),
    ("decomposition", decomposition),
    ("checkpoint", checkpoint),
];

/// Runs every invariant suite. Errors inside a suite count as failures.
pub fn run_verify(seed: u64) -> Vec<SuiteResult> {
    SUITES
        .iter()
        .enumerate()
        .map(|(i, (suite, f))| {
            let (passed, detail) = f(derive_seed(seed, i as u64)).unwrap_or_else(|e| (false, e.to_string()));
            SuiteResult { suite, passed, detail }
        })
        .collect()
}

fn random_config<R: Rng>(rng: &mut R, head: bool) -> ParaCFlowConfig {
    let action_dim = rng.random_range(1..=3);
    ParaCFlowConfig {
        action_dim,
        context_dim: rng.random_range(0..=3),
        width: rng.random_range(action_dim + 1..=8),
        n_layers: rng.random_range(1..=6),
        cond_hidden: vec![rng.random_range(2..=8)],
        head_hidden: head.then(|| vec![4]),
        activation: Activation::Tanh,
        identity_init: false,
        zero_ascend: false,
        train_ascend: true,
    }
}

fn random_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn flow_invertibility(seed: u64) -> paracflow::Result<(bool, String)> {
    let mut rng = rng_for(seed, 0);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let cfg = random_config(&mut rng, false);
        let model = ParaCFlowModel::new(cfg.clone(), derive_seed(seed, k))?;
        let c = random_vec(&mut rng, cfg.context_dim);
        let x = random_vec(&mut rng, cfg.width);
        let back = model.body().inverse(&c, &model.body().forward(&c, &x)?)?;
        worst = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    Ok((worst <= 1e-10, format!("max round-trip error {worst:.3e} over 100 bodies")))
}

fn gradients(seed: u64) -> paracflow::Result<(bool, String)> {
    let mut rng = rng_for(seed, 0);
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let cfg = random_config(&mut rng, true);
        let mut model = ParaCFlowModel::new(cfg.clone(), derive_seed(seed, k))?;
        let n = 3;
        let c = Mat::from_fn(n, cfg.context_dim, |_, _| rng.random_range(-1.0..1.0));
        let a = Mat::from_fn(n, cfg.action_dim, |_, _| rng.random_range(-1.0..1.0));
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = model.scalar_loss_grad(&c, &a, &v)?;
        let p0 = model.flat_params();
        let fd = fd_gradient(
            |p| {
                let mut m = model.clone();
                m.set_flat_params(p).expect("same length");
                m.scalar_loss_grad(&c, &a, &v).map(|r| r.0).unwrap_or(f64::NAN)
            },
            &p0,
            1e-6,
        );
        let num: f64 = g.iter().zip(&fd).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den = fd.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(num / den);
        model.set_flat_params(&p0)?;
    }
    Ok((worst <= 1e-5, format!("max relative gradient error {worst:.3e} over 10 nets")))
}

fn taiji_groundtruth(seed: u64) -> paracflow::Result<(bool, String)> {
    let mut rng = rng_for(seed, 0);
    let (mut ident, mut norm, mut semi, mut dy): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let x: [f64; 2] = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
        let (y1, y2) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let rho = x[0].hypot(x[1]);
        let f0 = taiji_apply(0.0, &x);
        ident = ident.max((f0[0] - x[0]).abs().max((f0[1] - x[1]).abs()));
        if rho >= 1.0 {
            let f = taiji_apply(y1, &x);
            ident = ident.max((f[0] - x[0]).abs().max((f[1] - x[1]).abs()));
        }
        let f = taiji_apply(y1, &x);
        norm = norm.max((f[0].hypot(f[1]) - rho).abs());
        let a = taiji_apply(y1, &taiji_apply(y2, &x));
        let b = taiji_apply(y1 + y2, &x);
        semi = semi.max((a[0] - b[0]).abs().max((a[1] - b[1]).abs()));
        if rho < 0.99 {
            let h = 1e-6;
            let (p, m) = (taiji_apply(y1 + h, &x), taiji_apply(y1 - h, &x));
            let d = taiji_dy(y1, &x).value;
            let fd = [(p[0] - m[0]) / (2.0 * h), (p[1] - m[1]) / (2.0 * h)];
            let err = (d[0] - fd[0]).hypot(d[1] - fd[1]) / d[0].hypot(d[1]).max(1e-3);
            dy = dy.max(err);
        }
    }
    let ok = ident == 0.0 && norm <= 1e-14 && semi <= 1e-12 && dy <= 1e-6;
    Ok((ok, format!("identity {ident:.1e}, norm {norm:.1e}, semigroup {semi:.1e}, dy vs fd {dy:.1e}")))
}

fn benchmarks(_seed: u64) -> paracflow::Result<(bool, String)> {
    let a = benchmark_eval(BenchmarkKind::Ackley, &[0.0; 5]);
    let r = benchmark_eval(BenchmarkKind::Rastrigin, &[0.0; 5]);
    let t = benchmark_eval(BenchmarkKind::Trid, &[2.0, 2.0]);
    let ok = a.abs() <= 1e-12 && r.abs() <= 1e-12 && t == -2.0;
    Ok((ok, format!("ackley(0) {a:.1e}, rastrigin(0) {r:.1e}, trid(2,2) {t}")))
}

fn kendall(_seed: u64) -> paracflow::Result<(bool, String)> {
    let up = kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0])?;
    let down = kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0])?;
    let ok = up == 1.0 && down == -1.0;
    Ok((ok, format!("concordant {up}, discordant {down}")))
}

fn decomposition(_seed: u64) -> paracflow::Result<(bool, String)> {
    let f = sin_cos_bump_map(0.05);
    let fac = decompose_near_identity(&f, &GridSpec::cube(2, -1.0, 1.0, 30)?)?;
    let tau = SingleCoordinateFactor::new(3, 1, |x: &[f64]| x[1] + 0.3 * (x[1] + x[0]).sin())?;
    let padded = AnalyticPadded::new(tau.clone());
    let mut pad_err: f64 = 0.0;
    for x in GridSpec::cube(3, -2.0, 2.0, 7)?.iter() {
        let z = padded.apply(&x)?;
        let want = tau.apply(&x)?;
        pad_err = want.iter().chain([0.0].iter()).zip(&z).map(|(a, b)| (a - b).abs()).fold(pad_err, f64::max);
    }
    let err = fac.report.reconstruction_error;
    let ok = fac.factors.len() == 2 && err <= 1e-6 && pad_err <= 1e-9;
    Ok((ok, format!("{} factors, reconstruction {err:.1e}, padded construction {pad_err:.1e}", fac.factors.len())))
}

fn checkpoint(seed: u64) -> paracflow::Result<(bool, String)> {
    let mut rng = rng_for(seed, 0);
    let cfg = random_config(&mut rng, true);
    let model = ParaCFlowModel::new(cfg.clone(), seed)?;
    let back = Checkpoint::from_json(&Checkpoint::from_model(&model).to_json()?)?.into_model()?;
    let same = model.flat_params().iter().zip(back.flat_params()).all(|(a, b)| a.to_bits() == b.to_bits());
    let c = random_vec(&mut rng, cfg.context_dim);
    let a = random_vec(&mut rng, cfg.action_dim);
    let out_same = model.predict(&c, &a)?.to_bits() == back.predict(&c, &a)?.to_bits();
    let bad = Checkpoint::from_json(r#"{"schema_version": 999}"#).is_err();
    Ok((same && out_same && bad, format!("params identical {same}, outputs identical {out_same}, bad version rejected {bad}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for r in run_verify(0) {
            assert!(r.passed, "{}", r.line());
        }
    }
}
