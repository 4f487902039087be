use std::fmt;
use std::sync::Arc;

use super::grid::BoxBounds;
use crate::error::{shape, Error, Result};
use crate::numkit::Mat;

pub(crate) type EvalFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;
pub(crate) type EvalJacFn = dyn Fn(&[f64]) -> Result<(Vec<f64>, Mat)> + Send + Sync;

/// Central-difference step used when no analytic Jacobian is attached.
pub const FD_STEP: f64 = 1e-6;

/// A map `ℝ^d → ℝ^d` equal to the identity outside `support`.
#[derive(Clone)]
pub struct SmoothMap {
    dim: usize,
    support: BoxBounds,
    eval: Arc<EvalFn>,
    eval_jac: Option<Arc<EvalJacFn>>,
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothMap")
            .field("dim", &self.dim)
            .field("support", &self.support)
            .field("analytic_jacobian", &self.eval_jac.is_some())
            .finish()
    }
}

impl SmoothMap {
    pub fn new<F>(dim: usize, support: BoxBounds, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::from_fallible(dim, support, move |x: &[f64]| Ok(f(x)), None)
    }

    pub fn from_fallible<F>(dim: usize, support: BoxBounds, f: F, eval_jac: Option<Arc<EvalJacFn>>) -> Result<Self>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        if support.dim() != dim {
            return Err(shape(format!("support box has dim {}, map has {dim}", support.dim())));
        }
        Ok(SmoothMap { dim, support, eval: Arc::new(f), eval_jac })
    }

    /// Attaches an analytic Jacobian.
    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&[f64]) -> Mat + Send + Sync + 'static,
    {
        let eval = self.eval.clone();
        self.eval_jac = Some(Arc::new(move |x: &[f64]| Ok((eval(x)?, jac(x)))));
        self
    }

    pub fn identity(dim: usize, support: BoxBounds) -> Result<Self> {
        Ok(Self::new(dim, support, |x| x.to_vec())?.with_jacobian(move |x| Mat::identity(x.len())))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &BoxBounds {
        &self.support
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.eval_jac.is_some()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(shape(format!("map of dim {} applied to length {}", self.dim, x.len())));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let y = (self.eval)(x)?;
        if y.len() != self.dim {
            return Err(shape(format!("map returned length {}, expected {}", y.len(), self.dim)));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("map returned a non-finite value".into()));
        }
        Ok(y)
    }

    /// Value and Jacobian; central differences when no analytic Jacobian is attached.
    pub fn eval_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Mat)> {
        self.check(x)?;
        if let Some(ej) = &self.eval_jac {
            let (y, j) = ej(x)?;
            if j.shape() != (self.dim, self.dim) {
                return Err(shape("analytic Jacobian has the wrong shape"));
            }
            return Ok((y, j));
        }
        let y = self.eval(x)?;
        let mut j = Mat::zeros(self.dim, self.dim);
        let mut xp = x.to_vec();
        for col in 0..self.dim {
            let h = FD_STEP * x[col].abs().max(1.0);
            xp[col] = x[col] + h;
            let fp = self.eval(&xp)?;
            xp[col] = x[col] - h;
            let fm = self.eval(&xp)?;
            xp[col] = x[col];
            for row in 0..self.dim {
                j.set(row, col, (fp[row] - fm[row]) / (2.0 * h));
            }
        }
        Ok((y, j))
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<Mat> {
        Ok(self.eval_with_jacobian(x)?.1)
    }

    /// `g ∘ self`.
    pub fn then(&self, g: &SmoothMap) -> Result<SmoothMap> {
        if g.dim != self.dim {
            return Err(shape("composition of maps with different dims"));
        }
        let (f1, f2) = (self.clone(), g.clone());
        let (j1, j2) = (self.clone(), g.clone());
        SmoothMap::from_fallible(
            self.dim,
            self.support.union(&g.support),
            move |x| f2.eval(&f1.eval(x)?),
            Some(Arc::new(move |x: &[f64]| {
                let (y, a) = j1.eval_with_jacobian(x)?;
                let (z, b) = j2.eval_with_jacobian(&y)?;
                Ok((z, b.matmul(&a)?))
            })),
        )
    }
}

/// `‖f(x) − x‖_∞` and the largest entry of `|Df(x) − I|`.
pub fn pointwise_deviation(x: &[f64], fx: &[f64], jac: &Mat) -> (f64, f64) {
    let c0 = x.iter().zip(fx).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut c1: f64 = 0.0;
    for i in 0..jac.rows() {
        for j in 0..jac.cols() {
            let e = if i == j { 1.0 } else { 0.0 };
            c1 = c1.max((jac.get(i, j) - e).abs());
        }
    }
    (c0, c1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> SmoothMap {
        SmoothMap::new(2, BoxBounds::cube(2, -1.0, 1.0).unwrap(), |x| vec![x[0] + 0.1 * x[1] * x[1], x[1]]).unwrap()
    }

    #[test]
    fn fd_fallback_matches_analytic() {
        let f = quad();
        let g = quad().with_jacobian(|x| Mat::from_vec(2, 2, vec![1.0, 0.2 * x[1], 0.0, 1.0]).unwrap());
        let x = [0.3, -0.7];
        assert!(f.jacobian(&x).unwrap().max_abs_diff(&g.jacobian(&x).unwrap()) < 1e-9);
    }

    #[test]
    fn composition_chain_rule() {
        let f = quad();
        let h = f.then(&f).unwrap();
        let x = [0.2, 0.5];
        let y = h.eval(&x).unwrap();
        assert!((y[0] - (0.2 + 0.2 * 0.25)).abs() < 1e-15);
        let (_, j) = h.eval_with_jacobian(&x).unwrap();
        assert!((j.get(0, 1) - 0.2).abs() < 1e-8);
    }

    #[test]
    fn length_checked() {
        assert!(quad().eval(&[1.0]).is_err());
        let bad = SmoothMap::new(2, BoxBounds::cube(2, 0.0, 1.0).unwrap(), |_| vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(bad.eval(&[0.0, 0.0]), Err(Error::Numeric(_))));
    }

    #[test]
    fn deviation_of_identity_is_zero() {
        let x = [0.1, 0.2];
        assert_eq!(pointwise_deviation(&x, &x, &Mat::identity(2)), (0.0, 0.0));
    }
}
