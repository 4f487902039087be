use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    Ackley,
    Trid,
    Rastrigin,
}

impl BenchmarkKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BenchmarkKind::Ackley => "ackley",
            BenchmarkKind::Trid => "trid",
            BenchmarkKind::Rastrigin => "rastrigin",
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Benchmark {
    pub kind: BenchmarkKind,
    pub dim: usize,
}

impl Benchmark {
    pub fn new(kind: BenchmarkKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("benchmark dimension must be positive".into()));
        }
        Ok(Benchmark { kind, dim })
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim {
            return Err(shape(format!("benchmark of dim {} got {} coordinates", self.dim, z.len())));
        }
        Ok(benchmark_eval(self.kind, z))
    }
}

/// Canonical (minimized) form of each benchmark at any dimension.
pub fn benchmark_eval(kind: BenchmarkKind, z: &[f64]) -> f64 {
    let n = z.len() as f64;
    match kind {
        BenchmarkKind::Ackley => {
            let sq = z.iter().map(|v| v * v).sum::<f64>() / n;
            let cs = z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
            -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
        }
        BenchmarkKind::Trid => {
            let a: f64 = z.iter().map(|v| (v - 1.0) * (v - 1.0)).sum();
            let b: f64 = z.windows(2).map(|w| w[0] * w[1]).sum();
            a - b
        }
        BenchmarkKind::Rastrigin => {
            10.0 * n + z.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    #[default]
    Minimize,
    Maximize,
}

impl Sense {
    /// `true` when `a` is strictly better than `b`.
    pub fn better(&self, a: f64, b: f64) -> bool {
        match self {
            Sense::Minimize => a < b,
            Sense::Maximize => a > b,
        }
    }

    /// Non-negative gap between an achieved value and the optimum.
    pub fn regret(&self, value: f64, best: f64) -> f64 {
        match self {
            Sense::Minimize => (value - best).max(0.0),
            Sense::Maximize => (best - value).max(0.0),
        }
    }
}

type ObjectiveFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;

#[derive(Clone)]
enum Objective {
    Benchmark(Benchmark),
    Custom(Arc<ObjectiveFn>),
}

/// Number of points of the action grid.
pub const ACTION_GRID_LEN: usize = 100;
pub const ACTION_RANGE: (f64, f64) = (-3.0, 3.0);

/// `n` evenly spaced points with exact endpoints.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
            v[n - 1] = hi;
            v
        }
    }
}

/// A benchmark whose leading coordinates are the context and whose last is the action.
#[derive(Clone)]
pub struct ContextualProblem {
    objective: Objective,
    context_dim: usize,
    grid: Vec<f64>,
    sense: Sense,
}

impl fmt::Debug for ContextualProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let obj = match &self.objective {
            Objective::Benchmark(b) => b.kind.as_str(),
            Objective::Custom(_) => "custom",
        };
        f.debug_struct("ContextualProblem")
            .field("objective", &obj)
            .field("context_dim", &self.context_dim)
            .field("grid_len", &self.grid.len())
            .field("sense", &self.sense)
            .finish()
    }
}

impl ContextualProblem {
    pub fn new(kind: BenchmarkKind, context_dim: usize) -> Result<Self> {
        if context_dim == 0 {
            return Err(Error::Argument("context dimension must be positive".into()));
        }
        Ok(ContextualProblem {
            objective: Objective::Benchmark(Benchmark::new(kind, context_dim + 1)?),
            context_dim,
            grid: linspace(ACTION_RANGE.0, ACTION_RANGE.1, ACTION_GRID_LEN),
            sense: Sense::Minimize,
        })
    }

    /// A problem with an arbitrary objective `(c, a) ↦ v`, on the standard grid.
    pub fn custom<F>(context_dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        ContextualProblem {
            objective: Objective::Custom(Arc::new(f)),
            context_dim,
            grid: linspace(ACTION_RANGE.0, ACTION_RANGE.1, ACTION_GRID_LEN),
            sense: Sense::Minimize,
        }
    }

    pub fn with_sense(mut self, sense: Sense) -> Self {
        self.sense = sense;
        self
    }

    pub fn benchmark(&self) -> Option<Benchmark> {
        match &self.objective {
            Objective::Benchmark(b) => Some(*b),
            Objective::Custom(_) => None,
        }
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn value(&self, c: &[f64], a: f64) -> Result<f64> {
        if c.len() != self.context_dim {
            return Err(shape(format!("context of dim {} expected {}", c.len(), self.context_dim)));
        }
        Ok(match &self.objective {
            Objective::Benchmark(b) => {
                let mut z = Vec::with_capacity(b.dim);
                z.extend_from_slice(c);
                z.push(a);
                benchmark_eval(b.kind, &z)
            }
            Objective::Custom(f) => f(c, a),
        })
    }

    /// Values over the whole action grid.
    pub fn sweep(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.grid.iter().map(|&a| self.value(c, a)).collect()
    }

    /// Uniform on `[−3, 3]^{d_c}`.
    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.context_dim).map(|_| rng.random_range(ACTION_RANGE.0..=ACTION_RANGE.1)).collect()
    }
}

/// Index of the best score under `sense`; ties go to the smallest index.
pub fn best_index(scores: &[f64], sense: Sense) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if sense.better(s, scores[b]) => best = Some(i),
            _ => {}
        }
    }
    best
}

/// Exhaustive scan of the action grid: `(a*, v*)`.
pub fn best_on_grid(problem: &ContextualProblem, c: &[f64]) -> Result<(f64, f64)> {
    let v = problem.sweep(c)?;
    let i = best_index(&v, problem.sense).ok_or_else(|| Error::State("empty action grid".into()))?;
    Ok((problem.grid[i], v[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::rng_from;

    #[test]
    fn known_values() {
        for d in [1, 2, 6, 21] {
            assert!(benchmark_eval(BenchmarkKind::Ackley, &vec![0.0; d]).abs() <= 1e-12);
            assert!(benchmark_eval(BenchmarkKind::Rastrigin, &vec![0.0; d]).abs() <= 1e-12);
        }
        assert_eq!(benchmark_eval(BenchmarkKind::Trid, &[2.0, 2.0]), -2.0);
        // Trid's global minimum at dim 2 is −2 at (2, 2)
        assert_eq!(benchmark_eval(BenchmarkKind::Trid, &[1.0, 1.0]), -1.0);
        assert!((benchmark_eval(BenchmarkKind::Rastrigin, &[1.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_checked() {
        let b = Benchmark::new(BenchmarkKind::Trid, 3).unwrap();
        assert!(b.eval(&[0.0; 2]).is_err());
        assert!(Benchmark::new(BenchmarkKind::Trid, 0).is_err());
    }

    #[test]
    fn grid_has_exact_endpoints() {
        let p = ContextualProblem::new(BenchmarkKind::Ackley, 5).unwrap();
        assert_eq!(p.grid().len(), 100);
        assert_eq!((p.grid()[0], p.grid()[99]), (-3.0, 3.0));
    }

    #[test]
    fn rastrigin_optimum_nearest_zero() {
        let p = ContextualProblem::new(BenchmarkKind::Rastrigin, 5).unwrap();
        let nearest = p.grid().iter().copied().fold(f64::INFINITY, |m, a| if a.abs() < m.abs() { a } else { m });
        let mut rng = rng_from(4);
        for _ in 0..20 {
            let c = p.sample_context(&mut rng);
            let (a, v) = best_on_grid(&p, &c).unwrap();
            assert_eq!(a, nearest);
            assert!(p.sweep(&c).unwrap().iter().all(|&w| v <= w));
        }
    }

    #[test]
    fn constant_objective_breaks_ties_left() {
        let p = ContextualProblem::custom(2, |_, _| 1.0);
        assert_eq!(best_on_grid(&p, &[0.0, 0.0]).unwrap(), (-3.0, 1.0));
        let q = ContextualProblem::custom(2, |_, _| 1.0).with_sense(Sense::Maximize);
        assert_eq!(best_on_grid(&q, &[0.0, 0.0]).unwrap(), (-3.0, 1.0));
    }

    #[test]
    fn maximize_flips_optimum_and_regret() {
        let p = ContextualProblem::custom(1, |_, a| -(a - 1.0) * (a - 1.0)).with_sense(Sense::Maximize);
        let (a, _) = best_on_grid(&p, &[0.0]).unwrap();
        assert!((a - 1.0).abs() < 0.04);
        assert_eq!(Sense::Maximize.regret(1.0, 3.0), 2.0);
        assert_eq!(Sense::Minimize.regret(3.0, 1.0), 2.0);
    }

    #[test]
    fn contexts_in_box() {
        let p = ContextualProblem::new(BenchmarkKind::Trid, 20).unwrap();
        let mut rng = rng_from(1);
        for _ in 0..100 {
            let c = p.sample_context(&mut rng);
            assert_eq!(c.len(), 20);
            assert!(c.iter().all(|v| (-3.0..=3.0).contains(v)));
        }
    }
}
