use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::benchmark::{BenchmarkKind, ContextualProblem, ACTION_RANGE};
use super::ensemble::{mean_std, Family, Surrogate, SurrogateEnsemble};
use crate::error::{shape, Error, Result};
use crate::numkit::{derive_seed, rng_for, Mat};

/// Kendall's τ-b with a flag for the undefined case (one side entirely tied),
/// where the value is 0.
pub fn kendall_tau_flagged(pred: &[f64], truth: &[f64]) -> Result<(f64, bool)> {
    if pred.len() != truth.len() {
        return Err(shape(format!("{} predictions vs {} truths", pred.len(), truth.len())));
    }
    if pred.len() < 2 {
        return Err(Error::Argument("Kendall's tau needs at least two points".into()));
    }
    let (mut concordant, mut discordant, mut tie_p, mut tie_t) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            let p = pred[i].partial_cmp(&pred[j]).unwrap_or(Ordering::Equal);
            let t = truth[i].partial_cmp(&truth[j]).unwrap_or(Ordering::Equal);
            match (p, t) {
                (Ordering::Equal, Ordering::Equal) => {}
                (Ordering::Equal, _) => tie_p += 1,
                (_, Ordering::Equal) => tie_t += 1,
                _ if p == t => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let denom = (((concordant + discordant + tie_p) * (concordant + discordant + tie_t)) as f64).sqrt();
    if denom == 0.0 {
        return Ok((0.0, true));
    }
    Ok(((concordant - discordant) as f64 / denom, false))
}

pub fn kendall_tau(pred: &[f64], truth: &[f64]) -> Result<f64> {
    Ok(kendall_tau_flagged(pred, truth)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KtConfig {
    pub benchmark: BenchmarkKind,
    pub context_dim: usize,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub test_contexts: usize,
    pub families: Vec<Family>,
    pub seed: u64,
}

impl Default for KtConfig {
    fn default() -> Self {
        KtConfig {
            benchmark: BenchmarkKind::Trid,
            context_dim: 20,
            sizes: vec![500, 1000, 2000, 5000],
            trials: 5,
            test_contexts: 1000,
            families: Family::ALL.to_vec(),
            seed: 0,
        }
    }
}

/// Mean KT of one trained model over the test contexts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KtEntry {
    pub family: Family,
    pub size: usize,
    pub trial: usize,
    pub mean_kt: f64,
    pub min_kt: f64,
    pub max_kt: f64,
    /// Test contexts whose sweep was entirely tied on one side.
    pub flagged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KtSummary {
    pub family: Family,
    pub size: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KtReport {
    pub entries: Vec<KtEntry>,
    pub summary: Vec<KtSummary>,
}

impl KtReport {
    pub fn from_entries(mut entries: Vec<KtEntry>) -> Self {
        entries.sort_by_key(|e| (e.family, e.size, e.trial));
        let mut summary: Vec<KtSummary> = Vec::new();
        for e in &entries {
            if summary.last().is_some_and(|s| (s.family, s.size) == (e.family, e.size)) {
                continue;
            }
            let v: Vec<f64> = entries.iter().filter(|x| (x.family, x.size) == (e.family, e.size)).map(|x| x.mean_kt).collect();
            let (mean, std) = mean_std(&v);
            summary.push(KtSummary { family: e.family, size: e.size, mean, std });
        }
        KtReport { entries, summary }
    }

    /// Mean over trials for `family`, averaged across sizes.
    pub fn family_mean(&self, family: Family) -> Option<f64> {
        let v: Vec<f64> = self.summary.iter().filter(|s| s.family == family).map(|s| s.mean).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Uniform `(c, a, value)` samples on `[−3, 3]^{d_c + 1}`.
pub fn uniform_dataset(problem: &ContextualProblem, n: usize, seed: u64) -> Result<(Mat, Vec<f64>, Vec<f64>)> {
    let mut rng = rng_for(seed, 0);
    let d = problem.context_dim();
    let mut c = Mat::zeros(n, d);
    let mut a = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let ci = problem.sample_context(&mut rng);
        let ai = rng.random_range(ACTION_RANGE.0..=ACTION_RANGE.1);
        v.push(problem.value(&ci, ai)?);
        c.row_mut(i).copy_from_slice(&ci);
        a.push(ai);
    }
    Ok((c, a, v))
}

/// KT statistics of `model` (member mean) over test contexts.
pub fn evaluate_kt(problem: &ContextualProblem, model: &dyn Surrogate, contexts: &Mat) -> Result<(f64, f64, f64, usize)> {
    let grid = problem.grid();
    let (mut sum, mut lo, mut hi, mut flagged) = (0.0, f64::INFINITY, f64::NEG_INFINITY, 0usize);
    for i in 0..contexts.rows() {
        let c = contexts.row(i);
        let preds = model.member_sweep(c, grid)?;
        let pred: Vec<f64> = (0..grid.len()).map(|j| mean_std(&preds.column(j)).0).collect();
        let (kt, flag) = kendall_tau_flagged(&pred, &problem.sweep(c)?)?;
        sum += kt;
        lo = lo.min(kt);
        hi = hi.max(kt);
        flagged += flag as usize;
    }
    Ok((sum / contexts.rows() as f64, lo, hi, flagged))
}

/// One `(family, size, trial)` cell. Training data and test contexts depend only
/// on `(seed, size, trial)`, so all families see the same data.
pub fn kt_trial(cfg: &KtConfig, family: Family, size: usize, trial: usize) -> Result<KtEntry> {
    let problem = ContextualProblem::new(cfg.benchmark, cfg.context_dim)?;
    let trial_seed = derive_seed(cfg.seed, trial as u64);
    let (c, a, v) = uniform_dataset(&problem, size, derive_seed(trial_seed, size as u64))?;
    let mut model = SurrogateEnsemble::with_members(family, cfg.context_dim, 1, derive_seed(trial_seed, 1 << 32))?;
    model.fit(&c, &a, &v)?;
    let mut rng = rng_for(trial_seed, 1 << 33);
    let mut tests = Mat::zeros(cfg.test_contexts, cfg.context_dim);
    for i in 0..cfg.test_contexts {
        let ci = problem.sample_context(&mut rng);
        tests.row_mut(i).copy_from_slice(&ci);
    }
    let (mean_kt, min_kt, max_kt, flagged) = evaluate_kt(&problem, &model, &tests)?;
    Ok(KtEntry { family, size, trial, mean_kt, min_kt, max_kt, flagged })
}

/// Every cell in order. Callers wanting parallelism run [`kt_trial`] themselves.
pub fn kt_experiment(cfg: &KtConfig) -> Result<KtReport> {
    if cfg.sizes.is_empty() || cfg.trials == 0 || cfg.test_contexts == 0 {
        return Err(Error::Argument("KT experiment needs sizes, trials and test contexts".into()));
    }
    let mut entries = Vec::new();
    for &family in &cfg.families {
        for &size in &cfg.sizes {
            for trial in 0..cfg.trials {
                entries.push(kt_trial(cfg, family, size, trial)?);
            }
        }
    }
    Ok(KtReport::from_entries(entries))
}
