use serde::{Deserialize, Serialize};

use super::coupling::{CouplingLayer, CouplingTape};
use super::permutation::Permutation;
use crate::error::{shape, Error, Result};
use crate::numkit::{Mat, Parameterized};

/// One flow step: permute, then couple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowStep {
    pub perm: Permutation,
    pub layer: CouplingLayer,
}

/// Composition `(φ_N P_N) ∘ ⋯ ∘ (φ_1 P_1)`; exactly invertible for a fixed context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct FlowStack {
    steps: Vec<FlowStep>,
}

#[derive(Debug, Default)]
pub struct StackTape {
    layers: Vec<CouplingTape>,
}

impl FlowStack {
    pub fn new(steps: Vec<FlowStep>) -> Result<Self> {
        if let Some(first) = steps.first() {
            let (d, m) = (first.layer.dim(), first.layer.cond_dim());
            for (i, s) in steps.iter().enumerate() {
                if s.layer.dim() != d || s.perm.len() != d || s.layer.cond_dim() != m {
                    return Err(shape(format!("flow step {i} does not match width {d} / context {m}")));
                }
            }
        }
        Ok(FlowStack { steps })
    }

    pub fn steps(&self) -> &[FlowStep] {
        &self.steps
    }

    pub fn steps_mut(&mut self) -> &mut [FlowStep] {
        &mut self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn check_width(&self, n: usize) -> Result<()> {
        match self.steps.first() {
            Some(s) if s.layer.dim() != n => Err(shape(format!("flow input has length {n}, width is {}", s.layer.dim()))),
            _ => Ok(()),
        }
    }

    pub fn forward(&self, c: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_width(x.len())?;
        let mut y = x.to_vec();
        for s in &self.steps {
            y = s.layer.forward(c, &s.perm.apply(&y))?;
        }
        Ok(y)
    }

    pub fn inverse(&self, c: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_width(y.len())?;
        let mut x = y.to_vec();
        for s in self.steps.iter().rev() {
            x = s.perm.apply_inverse(&s.layer.inverse(c, &x)?);
        }
        Ok(x)
    }

    pub fn log_det(&self, c: &[f64], x: &[f64]) -> Result<f64> {
        self.check_width(x.len())?;
        let mut y = x.to_vec();
        let mut total = 0.0;
        for s in &self.steps {
            let p = s.perm.apply(&y);
            total += s.layer.log_det(c, &p)?;
            y = s.layer.forward(c, &p)?;
        }
        Ok(total)
    }

    pub fn forward_batch(&self, c: &Mat, x: &Mat, mut tape: Option<&mut StackTape>) -> Result<Mat> {
        if let Some(t) = tape.as_deref_mut() {
            t.layers.clear();
        }
        self.check_width(x.cols())?;
        let mut y = x.clone();
        for s in &self.steps {
            let p = s.perm.apply_rows(&y);
            y = match tape.as_deref_mut() {
                Some(t) => {
                    let mut lt = CouplingTape::new();
                    let out = s.layer.forward_batch(c, &p, Some(&mut lt))?;
                    t.layers.push(lt);
                    out
                }
                None => s.layer.forward_batch(c, &p, None)?,
            };
        }
        Ok(y)
    }

    /// Back-propagates through a taped pass; accumulates parameter gradients
    /// into `grad` (stack parameter order) and returns input/context adjoints.
    pub fn backward(&self, tape: &StackTape, dy: &Mat, grad: &mut [f64]) -> Result<(Mat, Mat)> {
        if tape.layers.len() != self.steps.len() {
            return Err(Error::State("stack backward called before taped forward".into()));
        }
        let mut offsets = Vec::with_capacity(self.steps.len());
        let mut off = 0;
        for s in &self.steps {
            offsets.push(off);
            off += s.layer.param_count();
        }
        let m = self.steps.first().map_or(0, |s| s.layer.cond_dim());
        let mut dc = Mat::zeros(dy.rows(), m);
        let mut d = dy.clone();
        for (i, s) in self.steps.iter().enumerate().rev() {
            let n = s.layer.param_count();
            let (dx, dci) = s.layer.backward(&tape.layers[i], &d, &mut grad[offsets[i]..offsets[i] + n])?;
            for (a, b) in dc.data_mut().iter_mut().zip(dci.data()) {
                *a += b;
            }
            d = s.perm.apply_inverse_rows(&dx);
        }
        Ok((d, dc))
    }
}

impl Parameterized for FlowStack {
    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        for s in &self.steps {
            s.layer.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for s in &mut self.steps {
            s.layer.visit_params_mut(f);
        }
    }
}
