use serde::{Deserialize, Serialize};

use super::data::TaijiDataset;
use super::groundtruth::{taiji_apply, RegionLabel};
use crate::error::{shape, Error, Result};
use crate::flows::{ParaCFlowConfig, ParaCFlowModel};
use crate::numkit::{Activation, Mat, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaijiFlowConfig {
    pub n_layers: usize,
    /// Padded zeros appended to `x`.
    pub padding: usize,
    /// Conditioner hidden width; `None` means `max(8, 2 × conditioner input)`.
    pub hidden: Option<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
    /// Learning rate of an extra pass run after the main schedule; `None` skips it.
    pub finetune_lr: Option<f64>,
    pub finetune_epochs: usize,
    pub seed: u64,
}

impl Default for TaijiFlowConfig {
    fn default() -> Self {
        TaijiFlowConfig {
            n_layers: 6,
            padding: 1,
            hidden: None,
            activation: Activation::Tanh,
            train: TrainConfig::default(),
            finetune_lr: None,
            finetune_epochs: 0,
            seed: 0,
        }
    }
}

impl TaijiFlowConfig {
    pub fn flow_config(&self, param_dim: usize) -> ParaCFlowConfig {
        let width = 2 + self.padding;
        let split = 2usize.max(width / 2);
        let hidden = self.hidden.unwrap_or_else(|| 8usize.max(2 * (param_dim + split)));
        ParaCFlowConfig {
            action_dim: 2,
            context_dim: param_dim,
            width,
            n_layers: self.n_layers,
            cond_hidden: vec![hidden],
            head_hidden: None,
            activation: self.activation,
            identity_init: true,
            zero_ascend: true,
            train_ascend: false,
        }
    }
}

/// Trains a padded flow on the leading two output coordinates.
pub fn train_taiji_flow(data: &TaijiDataset, cfg: &TaijiFlowConfig) -> Result<(ParaCFlowModel, Vec<f64>)> {
    let mut model = ParaCFlowModel::new(cfg.flow_config(data.param_dim()), cfg.seed)?;
    let features = data.to_features();
    let mut trace = model.train_features(&features, &cfg.train)?;
    if let Some(lr) = cfg.finetune_lr {
        let extra = TrainConfig { lr, epochs: cfg.finetune_epochs, seed: cfg.train.seed.wrapping_add(1), ..cfg.train.clone() };
        trace.extend(model.train_features(&features, &extra)?);
    }
    Ok((model, trace))
}

/// `f̂_y(x)`: pad, run the flow, keep the first two coordinates.
pub fn model_apply(model: &ParaCFlowModel, y: &[f64], x: &[f64]) -> Result<[f64; 2]> {
    let f = model.features(y, x)?;
    Ok([f[0], f[1]])
}

/// `n`-fold composition `f̂_y ∘ ⋯ ∘ f̂_y`.
pub fn compose_model(model: &ParaCFlowModel, y: &[f64], x: &[f64], n: usize) -> Result<[f64; 2]> {
    if x.len() != 2 {
        return Err(shape("Taiji points are 2-dimensional"));
    }
    let mut p = [x[0], x[1]];
    for _ in 0..n {
        p = model_apply(model, y, &p)?;
    }
    Ok(p)
}

/// Root-mean-square error of `f̂` against the targets over samples with `ρ < rho_max`.
pub fn test_rmse(model: &ParaCFlowModel, data: &TaijiDataset, rho_max: f64) -> Result<f64> {
    let f = model.features_batch(&data.y, &data.x)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..data.len() {
        let x = data.x.row(i);
        if x[0].hypot(x[1]) >= rho_max {
            continue;
        }
        for j in 0..2 {
            let r = f.get(i, j) - data.target.get(i, j);
            sum += r * r;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Argument("no test samples inside the radius".into()));
    }
    Ok((sum / (2 * n) as f64).sqrt())
}

/// Points of a `points × points` grid over `[−1, 1]²` with `ρ < rho_max`.
pub fn disc_grid(points: usize, rho_max: f64) -> Vec<[f64; 2]> {
    let step = 2.0 / (points - 1) as f64;
    let mut out = Vec::new();
    for i in 0..points {
        for j in 0..points {
            let x = [-1.0 + step * i as f64, -1.0 + step * j as f64];
            if x[0].hypot(x[1]) < rho_max {
                out.push(x);
            }
        }
    }
    out
}

/// Fraction of interior grid points where `f̂_y^{∘n}` and `f_{n·y}` land in the same region.
pub fn composition_region_agreement(model: &ParaCFlowModel, y: f64, n: usize, points: usize) -> Result<f64> {
    let pts = disc_grid(points, 1.0);
    let ctx = vec![y; model.config().context_dim];
    let mut hits = 0usize;
    for x in &pts {
        let a = compose_model(model, &ctx, x, n)?;
        let b = taiji_apply(y * n as f64, x);
        if RegionLabel::of(&a) == RegionLabel::of(&b) {
            hits += 1;
        }
    }
    Ok(hits as f64 / pts.len() as f64)
}

/// Model predictions on a grid at a fixed parameter, one row per point:
/// `(x₁, x₂, f̂₁, f̂₂)`.
pub fn prediction_grid(model: &ParaCFlowModel, y: f64, points: usize) -> Result<Mat> {
    let pts = disc_grid(points, f64::INFINITY);
    let mut out = Mat::zeros(pts.len(), 4);
    let ctx = vec![y; model.config().context_dim];
    for (i, x) in pts.iter().enumerate() {
        let f = model_apply(model, &ctx, x)?;
        out.row_mut(i).copy_from_slice(&[x[0], x[1], f[0], f[1]]);
    }
    Ok(out)
}
