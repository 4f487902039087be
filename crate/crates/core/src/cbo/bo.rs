use rand::Rng;
use serde::{Deserialize, Serialize};

use super::benchmark::{best_on_grid, ContextualProblem};
use super::ensemble::{acquire_lcb, acquire_thompson, Surrogate};
use crate::error::{Error, Result};
use crate::numkit::{rng_for, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Lcb { kappa: f64 },
    Thompson,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Lcb { .. } => "lcb",
            Strategy::Thompson => "thompson",
        }
    }
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::Lcb { kappa: 1.0 }
    }
}

/// Which observations a refit sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitData {
    #[default]
    FullHistory,
    SinceLastFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub total_steps: usize,
    /// Steps with uniformly random actions before the first fit.
    pub init_steps: usize,
    pub refit_every: usize,
    pub refit_data: RefitData,
    pub strategy: Strategy,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            total_steps: 1000,
            init_steps: 100,
            refit_every: 100,
            refit_data: RefitData::FullHistory,
            strategy: Strategy::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoStep {
    /// 1-based.
    pub step: usize,
    pub context: Vec<f64>,
    pub action: f64,
    pub value: f64,
    pub best_action: f64,
    pub best_value: f64,
    pub regret: f64,
    pub cumulative_regret: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    pub steps: Vec<BoStep>,
    pub fits: usize,
}

impl BoTrace {
    pub fn final_cumulative_regret(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cumulative_regret)
    }
}

/// Stream indices under the run seed. Contexts and the initial actions do not
/// depend on the surrogate, so every family sees the same sequences.
const CONTEXT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const ACQUIRE_STREAM: u64 = 3;

/// Runs contextual BO on the action grid of `problem`.
///
/// Steps `1..=init_steps` take uniformly random grid actions; the surrogate is
/// fitted after step `init_steps` and refitted every `refit_every` steps.
/// Regret counts from step 1.
pub fn run_bo(problem: &ContextualProblem, surrogate: &mut dyn Surrogate, cfg: &BoConfig, seed: u64) -> Result<BoTrace> {
    if cfg.init_steps == 0 || cfg.total_steps < cfg.init_steps {
        return Err(Error::Argument(format!(
            "total steps ({}) must be at least the initialization steps ({}) and both positive",
            cfg.total_steps, cfg.init_steps
        )));
    }
    if cfg.refit_every == 0 {
        return Err(Error::Argument("refit interval must be positive".into()));
    }
    if let Strategy::Lcb { kappa } = cfg.strategy {
        if !(kappa >= 0.0) {
            return Err(Error::Argument(format!("kappa must be non-negative, got {kappa}")));
        }
    }
    let mut ctx_rng = rng_for(seed, CONTEXT_STREAM);
    let mut init_rng = rng_for(seed, INIT_STREAM);
    let mut acq_rng = rng_for(seed, ACQUIRE_STREAM);
    let grid = problem.grid();
    let d = problem.context_dim();
    let mut contexts: Vec<f64> = Vec::with_capacity(cfg.total_steps * d);
    let mut actions = Vec::with_capacity(cfg.total_steps);
    let mut values = Vec::with_capacity(cfg.total_steps);
    let mut trace = BoTrace::default();
    let mut last_fit = 0usize;
    let mut cumulative = 0.0;
    for step in 1..=cfg.total_steps {
        let c = problem.sample_context(&mut ctx_rng);
        let action = if step <= cfg.init_steps {
            grid[init_rng.random_range(0..grid.len())]
        } else {
            match cfg.strategy {
                Strategy::Lcb { kappa } => acquire_lcb(surrogate, &c, grid, kappa, problem.sense())?,
                Strategy::Thompson => acquire_thompson(surrogate, &c, grid, problem.sense(), &mut acq_rng)?,
            }
        };
        let value = problem.value(&c, action)?;
        let (best_action, best_value) = best_on_grid(problem, &c)?;
        let regret = problem.sense().regret(value, best_value);
        cumulative += regret;
        contexts.extend_from_slice(&c);
        actions.push(action);
        values.push(value);
        trace.steps.push(BoStep {
            step,
            context: c,
            action,
            value,
            best_action,
            best_value,
            regret,
            cumulative_regret: cumulative,
        });
        let due = step == cfg.init_steps || (step > cfg.init_steps && (step - cfg.init_steps) % cfg.refit_every == 0);
        if due && step < cfg.total_steps {
            let from = match cfg.refit_data {
                RefitData::FullHistory => 0,
                RefitData::SinceLastFit => last_fit,
            };
            let cm = Mat::from_vec(step - from, d, contexts[from * d..].to_vec())?;
            surrogate.fit(&cm, &actions[from..], &values[from..])?;
            last_fit = step;
            trace.fits += 1;
        }
    }
    Ok(trace)
}
