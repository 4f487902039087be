use serde::{Deserialize, Serialize};

use super::mlp::Parameterized;
use crate::error::{shape, Error, Result};

/// Adam optimizer state with bias correction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState { step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One update of a flat parameter vector.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(shape(format!(
                "adam state has {} params, got params {} grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.check(grads)?;
        self.step += 1;
        let (c1, c2) = self.corrections();
        for i in 0..params.len() {
            Self::update(&mut params[i], grads[i], &mut self.m[i], &mut self.v[i], self.beta1, self.beta2, self.eps, lr, c1, c2);
        }
        Ok(())
    }

    /// One update of a model's parameters, `grads` in the model's traversal order.
    pub fn step_model<M: Parameterized + ?Sized>(&mut self, model: &mut M, grads: &[f64], lr: f64) -> Result<()> {
        let n = model.param_count();
        if n != self.m.len() || grads.len() != n {
            return Err(shape(format!("adam state has {} params, model {} grads {}", self.m.len(), n, grads.len())));
        }
        self.check(grads)?;
        self.step += 1;
        let (c1, c2) = self.corrections();
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut off = 0;
        model.visit_params_mut(&mut |s| {
            for (k, p) in s.iter_mut().enumerate() {
                let i = off + k;
                Self::update(p, grads[i], &mut m[i], &mut v[i], b1, b2, eps, lr, c1, c2);
            }
            off += s.len();
        });
        Ok(())
    }

    fn check(&self, grads: &[f64]) -> Result<()> {
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient at parameter {i}")));
        }
        Ok(())
    }

    fn corrections(&self) -> (f64, f64) {
        let t = self.step as i32;
        (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t))
    }

    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, b1: f64, b2: f64, eps: f64, lr: f64, c1: f64, c2: f64) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
