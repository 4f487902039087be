use std::fmt;
use std::sync::Arc;

use super::grid::{BoxBounds, GridSpec};
use super::map::{SmoothMap, FD_STEP};
use super::root::{solve_increasing, solve_increasing_unbracketed, ROOT_TOL};
use crate::error::{shape, Error, Result};
use crate::numkit::Mat;

pub(crate) type ScalarFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;
pub(crate) type ScalarGradFn = dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Send + Sync;

/// `x ↦ (x_1, …, x_{i−1}, τ(x), x_{i+1}, …, x_d)` with `τ` increasing in `x_i`.
#[derive(Clone)]
pub struct SingleCoordinateFactor {
    dim: usize,
    coord: usize,
    support: Option<BoxBounds>,
    tau: Arc<ScalarFn>,
    grad: Option<Arc<ScalarGradFn>>,
}

impl fmt::Debug for SingleCoordinateFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SingleCoordinateFactor")
            .field("dim", &self.dim)
            .field("coord", &self.coord)
            .field("support", &self.support)
            .finish()
    }
}

impl SingleCoordinateFactor {
    pub fn new<T>(dim: usize, coord: usize, tau: T) -> Result<Self>
    where
        T: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::from_fallible(dim, coord, None, move |x: &[f64]| Ok(tau(x)), None)
    }

    pub fn from_fallible<T>(
        dim: usize,
        coord: usize,
        support: Option<BoxBounds>,
        tau: T,
        grad: Option<Arc<ScalarGradFn>>,
    ) -> Result<Self>
    where
        T: Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
    {
        if coord >= dim {
            return Err(Error::Argument(format!("coordinate {coord} out of range for dim {dim}")));
        }
        if support.as_ref().is_some_and(|s| s.dim() != dim) {
            return Err(shape("support box dim"));
        }
        Ok(SingleCoordinateFactor { dim, coord, support, tau: Arc::new(tau), grad })
    }

    /// Attaches the analytic gradient of `τ`.
    pub fn with_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        let tau = self.tau.clone();
        self.grad = Some(Arc::new(move |x: &[f64]| Ok((tau(x)?, grad(x)))));
        self
    }

    /// Declares that `τ(x) = x_i` outside `support`; enables bracket-free inversion.
    pub fn with_support(mut self, support: BoxBounds) -> Result<Self> {
        if support.dim() != self.dim {
            return Err(shape("support box dim"));
        }
        self.support = Some(support);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coord(&self) -> usize {
        self.coord
    }

    pub fn support(&self) -> Option<&BoxBounds> {
        self.support.as_ref()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(shape(format!("factor of dim {} applied to length {}", self.dim, x.len())));
        }
        Ok(())
    }

    pub fn tau(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let v = (self.tau)(x)?;
        if !v.is_finite() {
            return Err(Error::Numeric("non-finite coordinate transform".into()));
        }
        Ok(v)
    }

    /// `τ(x)` and `∇τ(x)`.
    pub fn tau_with_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(x)?;
        if let Some(g) = &self.grad {
            return g(x);
        }
        let v = self.tau(x)?;
        let mut xp = x.to_vec();
        let mut grad = vec![0.0; self.dim];
        for j in 0..self.dim {
            let h = FD_STEP * x[j].abs().max(1.0);
            xp[j] = x[j] + h;
            let p = self.tau(&xp)?;
            xp[j] = x[j] - h;
            let m = self.tau(&xp)?;
            xp[j] = x[j];
            grad[j] = (p - m) / (2.0 * h);
        }
        Ok((v, grad))
    }

    /// Applies the factor; every coordinate other than `coord` is copied unchanged.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = x.to_vec();
        y[self.coord] = self.tau(x)?;
        Ok(y)
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<Mat> {
        let (_, g) = self.tau_with_gradient(x)?;
        let mut j = Mat::identity(self.dim);
        j.row_mut(self.coord).copy_from_slice(&g);
        Ok(j)
    }

    /// Solves `τ(x_{≠i}, s) = v` for `s`, where the other coordinates come from `x`.
    pub fn solve_coordinate(&self, x: &[f64], v: f64) -> Result<f64> {
        self.check(x)?;
        let i = self.coord;
        let mut p = x.to_vec();
        let mut f = |t: f64| {
            p[i] = t;
            let (val, g) = self.tau_with_gradient(&p)?;
            Ok((val, g[i]))
        };
        match &self.support {
            Some(s) => {
                if (0..self.dim).any(|j| j != i && (x[j] < s.lo()[j] || x[j] > s.hi()[j])) {
                    return Ok(v);
                }
                let lo = s.lo()[i].min(v) - 1.0;
                let hi = s.hi()[i].max(v) + 1.0;
                solve_increasing(f, v, lo, hi, v, ROOT_TOL, 0)
            }
            None => solve_increasing_unbracketed(&mut f, v, v, ROOT_TOL, 0),
        }
    }

    /// Inverse of [`apply`](Self::apply).
    pub fn invert(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut x = y.to_vec();
        x[self.coord] = self.solve_coordinate(y, y[self.coord])?;
        Ok(x)
    }

    /// Smallest `∂τ/∂x_i` over the grid.
    pub fn min_monotone_slope(&self, grid: &GridSpec) -> Result<f64> {
        let mut m = f64::INFINITY;
        for x in grid.iter() {
            m = m.min(self.tau_with_gradient(&x)?.1[self.coord]);
        }
        Ok(m)
    }

    pub fn to_map(&self) -> Result<SmoothMap> {
        let support = match &self.support {
            Some(s) => s.clone(),
            None => BoxBounds::cube(self.dim, f64::MIN, f64::MAX)?,
        };
        let (a, b) = (self.clone(), self.clone());
        SmoothMap::from_fallible(
            self.dim,
            support,
            move |x| a.apply(x),
            Some(Arc::new(move |x: &[f64]| Ok((b.apply(x)?, b.jacobian(x)?)))),
        )
    }
}

/// Composes factors with `factors[0]` applied first.
pub fn compose_factors(dim: usize, factors: &[SingleCoordinateFactor]) -> Result<SmoothMap> {
    if let Some(f) = factors.iter().find(|f| f.dim() != dim) {
        return Err(shape(format!("factor of dim {} in a composition of dim {dim}", f.dim())));
    }
    let mut support: Option<BoxBounds> = None;
    for f in factors {
        let s = match f.support() {
            Some(s) => s.clone(),
            None => BoxBounds::cube(dim, f64::MIN, f64::MAX)?,
        };
        support = Some(match support {
            Some(u) => u.union(&s),
            None => s,
        });
    }
    let support = match support {
        Some(s) => s,
        None => BoxBounds::cube(dim, 0.0, 0.0)?,
    };
    let (fa, fb) = (factors.to_vec(), factors.to_vec());
    SmoothMap::from_fallible(
        dim,
        support,
        move |x| {
            let mut y = x.to_vec();
            for f in &fa {
                y[f.coord()] = f.tau(&y)?;
            }
            Ok(y)
        },
        Some(Arc::new(move |x: &[f64]| {
            let mut y = x.to_vec();
            let mut j = Mat::identity(dim);
            for f in &fb {
                let (v, g) = f.tau_with_gradient(&y)?;
                // row_i(J) ← gᵀ J
                let new_row: Vec<f64> = (0..dim).map(|c| (0..dim).map(|r| g[r] * j.get(r, c)).sum()).collect();
                j.row_mut(f.coord()).copy_from_slice(&new_row);
                y[f.coord()] = v;
            }
            Ok((y, j))
        })),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shear() -> SingleCoordinateFactor {
        SingleCoordinateFactor::new(2, 1, |x| x[1] + 0.5 * x[0].sin()).unwrap().with_gradient(|x| vec![0.5 * x[0].cos(), 1.0])
    }

    #[test]
    fn empty_composition_is_identity() {
        let m = compose_factors(3, &[]).unwrap();
        assert_eq!(m.eval(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn single_factor_composition() {
        let f = shear();
        let m = compose_factors(2, std::slice::from_ref(&f)).unwrap();
        let x = [0.4, -0.3];
        assert_eq!(m.eval(&x).unwrap(), f.apply(&x).unwrap());
    }

    #[test]
    fn purity_and_inverse() {
        let f = shear();
        let x = [0.7, 1.1];
        let y = f.apply(&x).unwrap();
        assert_eq!(y[0].to_bits(), x[0].to_bits());
        let back = f.invert(&y).unwrap();
        assert!((back[1] - x[1]).abs() < 1e-12);
    }

    #[test]
    fn chain_rule_matches_fd() {
        let f = shear();
        let g = SingleCoordinateFactor::new(2, 0, |x| x[0] + 0.3 * (x[1] * x[1]).tanh()).unwrap();
        let m = compose_factors(2, &[f.clone(), g.clone()]).unwrap();
        let x = [0.2, 0.9];
        let analytic = m.jacobian(&x).unwrap();
        let plain = SmoothMap::new(2, BoxBounds::cube(2, -9.0, 9.0).unwrap(), move |x| g.apply(&f.apply(x).unwrap()).unwrap()).unwrap();
        assert!(analytic.max_abs_diff(&plain.jacobian(&x).unwrap()) < 1e-8);
    }

    #[test]
    fn dim_mismatch() {
        assert!(compose_factors(3, &[shear()]).is_err());
        assert!(SingleCoordinateFactor::new(2, 2, |x| x[0]).is_err());
    }
}
