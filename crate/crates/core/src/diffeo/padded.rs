use serde::{Deserialize, Serialize};

use super::factor::SingleCoordinateFactor;
use super::grid::GridSpec;
use crate::error::{shape, Error, Result};
use crate::numkit::{rng_from, train_mlp_mse, Activation, Mat, MlpNet, Parameterized, TrainConfig};

/// Exact three-step padded realization of a single-coordinate transform `τ`
/// acting on coordinate `i`, on `ℝ^{d+1}` with the pad in the last slot:
///
/// 1. `pad ← pad + τ(x)`
/// 2. swap coordinate `i` with the pad
/// 3. `pad ← pad − τ⁻¹(x_{≠i}, v)`, where `v` is the value now at slot `i`
///
/// so that `(x, 0) ↦ (x_{<i}, τ(x), x_{>i}, 0)`.
#[derive(Clone, Debug)]
pub struct AnalyticPadded {
    tau: SingleCoordinateFactor,
}

impl AnalyticPadded {
    pub fn new(tau: SingleCoordinateFactor) -> Self {
        AnalyticPadded { tau }
    }

    pub fn dim(&self) -> usize {
        self.tau.dim()
    }

    /// Runs the three steps on a point of the padded space.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if z.len() != d + 1 {
            return Err(shape(format!("padded input needs length {}, got {}", d + 1, z.len())));
        }
        let i = self.tau.coord();
        let mut y = z.to_vec();
        y[d] += self.tau.tau(&z[..d])?;
        y.swap(i, d);
        let u = self.tau.solve_coordinate(&y[..d], y[i])?;
        y[d] -= u;
        Ok(y)
    }

    /// `τ̃(ι(x))`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = x.to_vec();
        z.push(0.0);
        self.forward(&z)
    }
}

/// Trained counterpart of [`AnalyticPadded`]. The shifts are written as
/// `t₁(x) = x_i + r₁(x)` and `t₃(u) = −u_i + r₃(u)` so that zero nets give the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddedSingleCoordinate {
    dim: usize,
    coord: usize,
    r1: MlpNet,
    r3: MlpNet,
}

impl PaddedSingleCoordinate {
    pub fn new(dim: usize, coord: usize, r1: MlpNet, r3: MlpNet) -> Result<Self> {
        if coord >= dim {
            return Err(Error::Argument(format!("coordinate {coord} out of range for dim {dim}")));
        }
        for net in [&r1, &r3] {
            if net.input_dim() != dim || net.output_dim() != 1 {
                return Err(shape(format!("residual nets must map {dim} -> 1")));
            }
        }
        Ok(PaddedSingleCoordinate { dim, coord, r1, r3 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coord(&self) -> usize {
        self.coord
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        if z.len() != d + 1 {
            return Err(shape(format!("padded input needs length {}, got {}", d + 1, z.len())));
        }
        let i = self.coord;
        let mut y = z.to_vec();
        y[d] += z[i] + self.r1.forward(&z[..d])?[0];
        y.swap(i, d);
        y[d] += -y[i] + self.r3.forward(&y[..d])?[0];
        Ok(y)
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        if y.len() != d + 1 {
            return Err(shape(format!("padded input needs length {}, got {}", d + 1, y.len())));
        }
        let i = self.coord;
        let mut z = y.to_vec();
        z[d] -= -z[i] + self.r3.forward(&z[..d])?[0];
        z.swap(i, d);
        z[d] -= z[i] + self.r1.forward(&z[..d])?[0];
        Ok(z)
    }

    /// `τ̃(ι(x))`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = x.to_vec();
        z.push(0.0);
        self.forward(&z)
    }
}

impl Parameterized for PaddedSingleCoordinate {
    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        self.r1.visit_params(f);
        self.r3.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.r1.visit_params_mut(f);
        self.r3.visit_params_mut(f);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PaddedConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
    /// Learning rate of a second, equally long pass; skipped when `None`.
    pub finetune_lr: Option<f64>,
    /// Required sup error of `π ∘ τ̃ ∘ ι` against `τ` on the grid.
    pub target_eps: f64,
    pub seed: u64,
}

impl Default for PaddedConfig {
    fn default() -> Self {
        PaddedConfig {
            hidden: vec![64],
            activation: Activation::Tanh,
            train: TrainConfig { batch_size: 64, epochs: 200, lr: 0.01, seed: 0 },
            finetune_lr: Some(1e-3),
            target_eps: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddedReport {
    /// Sup over the grid of `‖π(τ̃(ι(x))) − τ(x)‖_∞`.
    pub sup_error: f64,
    /// Sup over the grid of the pad coordinate after the third step.
    pub pad_residual: f64,
    pub target_eps: f64,
    pub reached: bool,
    pub final_loss_step1: f64,
    pub final_loss_step3: f64,
}

/// Trains the residual shifts of a padded three-step flow against their
/// analytic targets on the grid: `r₁ → τ(x) − x_i` and `r₃ → u_i − τ⁻¹(u)`,
/// with `τ⁻¹` tabulated by root finding.
pub fn approximate_single_coordinate(
    tau: &SingleCoordinateFactor,
    grid: &GridSpec,
    cfg: &PaddedConfig,
) -> Result<(PaddedSingleCoordinate, PaddedReport)> {
    let d = tau.dim();
    if grid.dim() != d {
        return Err(shape("grid and transform dims differ"));
    }
    let i = tau.coord();
    let n = grid.len();
    let mut inputs = Mat::zeros(n, d);
    let mut t1 = Mat::zeros(n, 1);
    let mut t3 = Mat::zeros(n, 1);
    for (row, x) in grid.iter().enumerate() {
        inputs.row_mut(row).copy_from_slice(&x);
        t1.set(row, 0, tau.tau(&x)? - x[i]);
        t3.set(row, 0, x[i] - tau.solve_coordinate(&x, x[i])?);
    }
    let mut rng = rng_from(cfg.seed);
    let mut dims = vec![d];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(1);
    let mut r1 = MlpNet::glorot(&dims, cfg.activation, &mut rng)?;
    let mut r3 = MlpNet::glorot(&dims, cfg.activation, &mut rng)?;
    r1.zero_output_layer();
    r3.zero_output_layer();

    let fit = |net: &mut MlpNet, targets: &Mat, salt: u64| -> Result<f64> {
        let mut train = cfg.train.clone();
        train.seed = cfg.train.seed.wrapping_add(salt);
        let mut trace = train_mlp_mse(net, &inputs, targets, &train)?;
        if let Some(lr) = cfg.finetune_lr {
            train.lr = lr;
            trace = train_mlp_mse(net, &inputs, targets, &train)?;
        }
        Ok(trace.last().copied().unwrap_or(f64::NAN))
    };
    let loss1 = fit(&mut r1, &t1, 1)?;
    let loss3 = fit(&mut r3, &t3, 2)?;
    let model = PaddedSingleCoordinate::new(d, i, r1, r3)?;

    let (mut sup_error, mut pad_residual) = (0.0f64, 0.0f64);
    for x in grid.iter() {
        let y = model.apply(&x)?;
        let target = tau.apply(&x)?;
        sup_error = y[..d].iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(sup_error, f64::max);
        pad_residual = pad_residual.max(y[d].abs());
    }
    let report = PaddedReport {
        sup_error,
        pad_residual,
        target_eps: cfg.target_eps,
        reached: sup_error <= cfg.target_eps,
        final_loss_step1: loss1,
        final_loss_step3: loss3,
    };
    Ok((model, report))
}
