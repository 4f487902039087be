use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::numkit::{Activation, GradTape, Mat, MlpNet, Parameterized};

/// Scale outputs are clamped to `[-SIGMA_CLAMP, SIGMA_CLAMP]` before `exp`.
pub const SIGMA_CLAMP: f64 = 8.0;

/// Affine coupling layer conditioned on a context vector:
///
/// `(x_{≤d'}, x_{>d'}) ↦ (x_{≤d'}, x_{>d'} ⊙ exp(σ(c, x_{≤d'})) + t(c, x_{≤d'}))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingLayer {
    dim: usize,
    split: usize,
    cond_dim: usize,
    sigma_net: MlpNet,
    t_net: MlpNet,
}

/// Per-batch record for the backward sweep of one coupling layer.
#[derive(Debug, Default, Clone)]
pub struct CouplingTape {
    sigma: GradTape,
    shift: GradTape,
    v: Option<Mat>,
    s_raw: Option<Mat>,
    exp_s: Option<Mat>,
}

impl CouplingLayer {
    pub fn new(dim: usize, split: usize, cond_dim: usize, sigma_net: MlpNet, t_net: MlpNet) -> Result<Self> {
        if split == 0 || split >= dim {
            return Err(Error::Argument(format!("split {split} must satisfy 1 <= split < {dim}")));
        }
        for (name, net) in [("sigma", &sigma_net), ("t", &t_net)] {
            if net.input_dim() != cond_dim + split || net.output_dim() != dim - split {
                return Err(shape(format!(
                    "{name} net maps {} -> {}, expected {} -> {}",
                    net.input_dim(),
                    net.output_dim(),
                    cond_dim + split,
                    dim - split
                )));
            }
        }
        Ok(CouplingLayer { dim, split, cond_dim, sigma_net, t_net })
    }

    /// Glorot-initialized conditioners with the given hidden widths. With
    /// `identity_init` the output layers start at zero, so the layer is the identity.
    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        split: usize,
        cond_dim: usize,
        hidden: &[usize],
        activation: Activation,
        identity_init: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let dims = Self::net_dims(dim, split, cond_dim, hidden)?;
        let mut sigma_net = MlpNet::glorot(&dims, activation, rng)?;
        let mut t_net = MlpNet::glorot(&dims, activation, rng)?;
        if identity_init {
            sigma_net.zero_output_layer();
            t_net.zero_output_layer();
        }
        Self::new(dim, split, cond_dim, sigma_net, t_net)
    }

    /// Layer with all-zero conditioners.
    pub fn identity(dim: usize, split: usize, cond_dim: usize, hidden: &[usize], activation: Activation) -> Result<Self> {
        let dims = Self::net_dims(dim, split, cond_dim, hidden)?;
        Self::new(dim, split, cond_dim, MlpNet::zeros(&dims, activation)?, MlpNet::zeros(&dims, activation)?)
    }

    fn net_dims(dim: usize, split: usize, cond_dim: usize, hidden: &[usize]) -> Result<Vec<usize>> {
        if split == 0 || split >= dim {
            return Err(Error::Argument(format!("split {split} must satisfy 1 <= split < {dim}")));
        }
        let mut dims = vec![cond_dim + split];
        dims.extend_from_slice(hidden);
        dims.push(dim - split);
        Ok(dims)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn sigma_net(&self) -> &MlpNet {
        &self.sigma_net
    }

    pub fn t_net(&self) -> &MlpNet {
        &self.t_net
    }

    pub fn sigma_net_mut(&mut self) -> &mut MlpNet {
        &mut self.sigma_net
    }

    pub fn t_net_mut(&mut self) -> &mut MlpNet {
        &mut self.t_net
    }

    fn check_inputs(&self, c: &[f64], x: &[f64]) -> Result<()> {
        if c.len() != self.cond_dim || x.len() != self.dim {
            return Err(shape(format!(
                "coupling layer expects context {} and input {}, got {} and {}",
                self.cond_dim,
                self.dim,
                c.len(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Clamped scale and shift for the pass-through block `u`.
    fn scale_shift(&self, c: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut z = Vec::with_capacity(self.cond_dim + self.split);
        z.extend_from_slice(c);
        z.extend_from_slice(u);
        let s = self.sigma_net.forward(&z)?;
        let t = self.t_net.forward(&z)?;
        if s.iter().chain(&t).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite conditioner output".into()));
        }
        Ok((s.into_iter().map(|v| v.clamp(-SIGMA_CLAMP, SIGMA_CLAMP)).collect(), t))
    }

    pub fn forward(&self, c: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(c, x)?;
        let (s, t) = self.scale_shift(c, &x[..self.split])?;
        let mut y = x.to_vec();
        for k in 0..self.dim - self.split {
            y[self.split + k] = x[self.split + k] * s[k].exp() + t[k];
        }
        Ok(y)
    }

    pub fn inverse(&self, c: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(c, y)?;
        let (s, t) = self.scale_shift(c, &y[..self.split])?;
        let mut x = y.to_vec();
        for k in 0..self.dim - self.split {
            x[self.split + k] = (y[self.split + k] - t[k]) * (-s[k]).exp();
        }
        Ok(x)
    }

    /// `log |det ∂y/∂x| = Σ σ(c, x_{≤d'})`.
    pub fn log_det(&self, c: &[f64], x: &[f64]) -> Result<f64> {
        self.check_inputs(c, x)?;
        let (s, _) = self.scale_shift(c, &x[..self.split])?;
        Ok(s.iter().sum())
    }

    fn cond_input(&self, c: &Mat, u: &Mat) -> Result<Mat> {
        if self.cond_dim == 0 {
            Ok(u.clone())
        } else {
            c.hcat(u)
        }
    }

    /// Batched forward; rows are samples. Records into `tape` when given.
    pub fn forward_batch(&self, c: &Mat, x: &Mat, mut tape: Option<&mut CouplingTape>) -> Result<Mat> {
        if x.cols() != self.dim || c.cols() != self.cond_dim || (self.cond_dim > 0 && c.rows() != x.rows()) {
            return Err(shape(format!(
                "coupling batch expects context {}x{} and input {}x{}, got {:?} and {:?}",
                x.rows(),
                self.cond_dim,
                x.rows(),
                self.dim,
                c.shape(),
                x.shape()
            )));
        }
        let u = x.cols_range(0, self.split);
        let v = x.cols_range(self.split, self.dim);
        let z = self.cond_input(c, &u)?;
        let (s_raw, t) = match tape.as_deref_mut() {
            Some(tp) => {
                let s = tp.sigma.forward(&self.sigma_net, &z)?;
                let t = tp.shift.forward(&self.t_net, &z)?;
                (s, t)
            }
            None => (self.sigma_net.forward_batch(&z)?, self.t_net.forward_batch(&z)?),
        };
        if !s_raw.is_finite() || !t.is_finite() {
            return Err(Error::Numeric("non-finite conditioner output".into()));
        }
        let mut exp_s = s_raw.clone();
        exp_s.data_mut().iter_mut().for_each(|s| *s = s.clamp(-SIGMA_CLAMP, SIGMA_CLAMP).exp());
        let mut y = x.clone();
        let w = self.dim - self.split;
        for i in 0..x.rows() {
            let (vr, er, tr) = (v.row(i), exp_s.row(i), t.row(i));
            let yr = &mut y.row_mut(i)[self.split..];
            for k in 0..w {
                yr[k] = vr[k] * er[k] + tr[k];
            }
        }
        if let Some(tp) = tape {
            tp.v = Some(v);
            tp.s_raw = Some(s_raw);
            tp.exp_s = Some(exp_s);
        }
        Ok(y)
    }

    /// Shorthand for a recorded [`forward_batch`](Self::forward_batch).
    pub fn forward_batch_taped(&self, c: &Mat, x: &Mat, tape: &mut CouplingTape) -> Result<Mat> {
        self.forward_batch(c, x, Some(tape))
    }

    /// Back-propagates `dy` through a taped forward pass. Parameter gradients
    /// (sigma net, then t net) are accumulated into `grad`. Returns the
    /// adjoints of the input and of the context.
    pub fn backward(&self, tape: &CouplingTape, dy: &Mat, grad: &mut [f64]) -> Result<(Mat, Mat)> {
        let (v, s_raw, exp_s) = match (&tape.v, &tape.s_raw, &tape.exp_s) {
            (Some(v), Some(s), Some(e)) => (v, s, e),
            _ => return Err(Error::State("coupling backward called before taped forward".into())),
        };
        let n = dy.rows();
        let w = self.dim - self.split;
        let mut dv = Mat::zeros(n, w);
        let mut ds = Mat::zeros(n, w);
        let mut dt = Mat::zeros(n, w);
        for i in 0..n {
            let dyr = &dy.row(i)[self.split..];
            for k in 0..w {
                let e = exp_s.get(i, k);
                dv.set(i, k, dyr[k] * e);
                let sr = s_raw.get(i, k);
                if (-SIGMA_CLAMP..=SIGMA_CLAMP).contains(&sr) {
                    ds.set(i, k, dyr[k] * v.get(i, k) * e);
                }
                dt.set(i, k, dyr[k]);
            }
        }
        let ns = self.sigma_net.param_count();
        let (gs, gt) = grad.split_at_mut(ns);
        let dz_s = tape.sigma.backward_into(&self.sigma_net, &ds, gs)?;
        let dz_t = tape.shift.backward_into(&self.t_net, &dt, gt)?;
        let m = self.cond_dim;
        let mut dx = Mat::zeros(n, self.dim);
        let mut dc = Mat::zeros(n, m);
        for i in 0..n {
            let (zs, zt) = (dz_s.row(i), dz_t.row(i));
            for j in 0..m {
                dc.set(i, j, zs[j] + zt[j]);
            }
            let dyr = dy.row(i);
            let dxr = dx.row_mut(i);
            for j in 0..self.split {
                dxr[j] = dyr[j] + zs[m + j] + zt[m + j];
            }
            dxr[self.split..].copy_from_slice(dv.row(i));
        }
        Ok((dx, dc))
    }
}

impl CouplingTape {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Parameterized for CouplingLayer {
    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        self.sigma_net.visit_params(f);
        self.t_net.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.sigma_net.visit_params_mut(f);
        self.t_net.visit_params_mut(f);
    }
}
