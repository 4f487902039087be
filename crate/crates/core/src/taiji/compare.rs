use serde::{Deserialize, Serialize};

use super::data::{gen_taiji_dataset, TaijiDataset, TaijiMode};
use super::groundtruth::RegionLabel;
use super::model::{disc_grid, train_taiji_flow, TaijiFlowConfig};
use crate::cbo::AppendResnet;
use crate::error::{Error, Result};
use crate::flows::ParaCFlowModel;
use crate::numkit::{derive_seed, rng_from, train_minibatch, train_mlp_mse, Activation, Mat, MlpNet, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareModel {
    #[serde(rename = "paracflow")]
    ParaCFlow,
    Mlp,
    Resnet,
}

impl CompareModel {
    pub const ALL: [CompareModel; 3] = [CompareModel::ParaCFlow, CompareModel::Mlp, CompareModel::Resnet];

    pub fn as_str(&self) -> &'static str {
        match self {
            CompareModel::ParaCFlow => "paracflow",
            CompareModel::Mlp => "mlp",
            CompareModel::Resnet => "resnet",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub samples: usize,
    pub test_samples: usize,
    pub mlp_hidden: Vec<usize>,
    pub resnet_hidden: Vec<usize>,
    pub flow: TaijiFlowConfig,
    /// Shared by all three models.
    pub train: TrainConfig,
    pub grid_points: usize,
    pub coverage_cells: usize,
    pub params: Vec<f64>,
    pub seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            samples: 3000,
            test_samples: 1000,
            mlp_hidden: vec![128, 64, 32],
            resnet_hidden: vec![128, 64, 32],
            flow: TaijiFlowConfig::default(),
            train: TrainConfig::default(),
            grid_points: 200,
            coverage_cells: 40,
            params: vec![0.0, 0.5, 1.0],
            seed: 0,
        }
    }
}

/// A trained model mapping rows `(y, x)` to `f̂_y(x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum TaijiRegressor {
    ParaCFlow(ParaCFlowModel),
    Mlp(MlpNet),
    Resnet(AppendResnet),
}

impl TaijiRegressor {
    pub fn predict(&self, y: &Mat, x: &Mat) -> Result<Mat> {
        match self {
            TaijiRegressor::ParaCFlow(m) => Ok(m.features_batch(y, x)?.cols_range(0, 2)),
            TaijiRegressor::Mlp(n) => n.forward_batch(&y.hcat(x)?),
            TaijiRegressor::Resnet(n) => n.forward_batch(&y.hcat(x)?),
        }
    }
}

/// Predictions at parameter vector `(y, …, y)` for every grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionGrid {
    pub model: CompareModel,
    pub y: f64,
    /// Rows `(x₁, x₂, f̂₁, f̂₂)`.
    pub points: Mat,
    pub regions: Vec<RegionLabel>,
    pub interior_coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: CompareModel,
    pub final_loss: f64,
    pub test_rmse_interior: f64,
    pub params: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub models: Vec<ModelSummary>,
    pub grids: Vec<PredictionGrid>,
}

impl CompareReport {
    pub fn coverage(&self, model: CompareModel, y: f64) -> Option<f64> {
        self.grids.iter().find(|g| g.model == model && g.y == y).map(|g| g.interior_coverage)
    }
}

/// Fraction of the `cells × cells` partition of `[−1, 1]²` whose centre lies in
/// the open unit disc and which contains at least one of `points`.
pub fn interior_coverage(points: &[[f64; 2]], cells: usize) -> f64 {
    let w = 2.0 / cells as f64;
    let mut hit = vec![false; cells * cells];
    for p in points {
        if !(-1.0..1.0).contains(&p[0]) || !(-1.0..1.0).contains(&p[1]) {
            continue;
        }
        let i = ((p[0] + 1.0) / w) as usize;
        let j = ((p[1] + 1.0) / w) as usize;
        hit[i.min(cells - 1) * cells + j.min(cells - 1)] = true;
    }
    let (mut inside, mut covered) = (0usize, 0usize);
    for i in 0..cells {
        for j in 0..cells {
            let c = [-1.0 + w * (i as f64 + 0.5), -1.0 + w * (j as f64 + 0.5)];
            if c[0].hypot(c[1]) < 1.0 {
                inside += 1;
                covered += hit[i * cells + j] as usize;
            }
        }
    }
    covered as f64 / inside as f64
}

fn rmse_interior(pred: &Mat, data: &TaijiDataset) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..data.len() {
        let x = data.x.row(i);
        if x[0].hypot(x[1]) < 0.9 {
            for j in 0..2 {
                let r = pred.get(i, j) - data.target.get(i, j);
                sum += r * r;
            }
            n += 1;
        }
    }
    (sum / (2 * n.max(1)) as f64).sqrt()
}

/// Trains one model of each kind on the same noisy-parameter data.
pub fn train_comparison_model(model: CompareModel, data: &TaijiDataset, cfg: &CompareConfig) -> Result<(TaijiRegressor, f64)> {
    let seed = derive_seed(cfg.seed, model as u64 + 1);
    let train = TrainConfig { seed, ..cfg.train.clone() };
    let k = data.param_dim();
    let mut rng = rng_from(seed);
    let last = |t: Vec<f64>| t.last().copied().unwrap_or(f64::NAN);
    Ok(match model {
        CompareModel::ParaCFlow => {
            let fc = TaijiFlowConfig { train: train.clone(), seed, ..cfg.flow.clone() };
            let (m, trace) = train_taiji_flow(data, &fc)?;
            (TaijiRegressor::ParaCFlow(m), last(trace))
        }
        CompareModel::Mlp => {
            let mut dims = vec![k + 2];
            dims.extend_from_slice(&cfg.mlp_hidden);
            dims.push(2);
            let mut net = MlpNet::glorot(&dims, Activation::Tanh, &mut rng)?;
            let trace = train_mlp_mse(&mut net, &data.y.hcat(&data.x)?, &data.target, &train)?;
            (TaijiRegressor::Mlp(net), last(trace))
        }
        CompareModel::Resnet => {
            let mut net = AppendResnet::glorot_general(k, 2, &cfg.resnet_hidden, 2, Activation::Tanh, &mut rng)?;
            let inputs = data.y.hcat(&data.x)?;
            let trace = train_minibatch(&mut net, data.len(), &train, |m, idx| {
                m.mse_grad(&inputs.select_rows(idx), &data.target.select_rows(idx))
            })?;
            (TaijiRegressor::Resnet(net), last(trace))
        }
    })
}

pub fn prediction_grid_for(
    reg: &TaijiRegressor,
    model: CompareModel,
    param_dim: usize,
    y: f64,
    cfg: &CompareConfig,
) -> Result<PredictionGrid> {
    let pts = disc_grid(cfg.grid_points, f64::INFINITY);
    let x = Mat::from_rows(&pts)?;
    let ys = Mat::from_fn(pts.len(), param_dim, |_, _| y);
    let f = reg.predict(&ys, &x)?;
    let mut points = Mat::zeros(pts.len(), 4);
    let mut out = Vec::with_capacity(pts.len());
    let mut regions = Vec::with_capacity(pts.len());
    for (i, p) in pts.iter().enumerate() {
        let q = [f.get(i, 0), f.get(i, 1)];
        if !q[0].is_finite() || !q[1].is_finite() {
            return Err(Error::Numeric(format!("{} produced a non-finite prediction", model.as_str())));
        }
        points.row_mut(i).copy_from_slice(&[p[0], p[1], q[0], q[1]]);
        regions.push(RegionLabel::of(p));
        out.push(q);
    }
    Ok(PredictionGrid { model, y, points, regions, interior_coverage: interior_coverage(&out, cfg.coverage_cells) })
}

/// Para-CFlow, MLP and Resnet on the 100-dimensional-parameter task.
pub fn run_baseline_comparison(cfg: &CompareConfig) -> Result<CompareReport> {
    let data = gen_taiji_dataset(cfg.samples, cfg.seed, TaijiMode::Vector100)?;
    let test = gen_taiji_dataset(cfg.test_samples.max(1), derive_seed(cfg.seed, 99), TaijiMode::Vector100)?;
    let mut models = Vec::new();
    let mut grids = Vec::new();
    for kind in CompareModel::ALL {
        let (reg, final_loss) = train_comparison_model(kind, &data, cfg)?;
        let params = match &reg {
            TaijiRegressor::ParaCFlow(m) => crate::numkit::Parameterized::param_count(m),
            TaijiRegressor::Mlp(n) => crate::numkit::Parameterized::param_count(n),
            TaijiRegressor::Resnet(n) => crate::numkit::Parameterized::param_count(n),
        };
        let pred = reg.predict(&test.y, &test.x)?;
        models.push(ModelSummary { model: kind, final_loss, test_rmse_interior: rmse_interior(&pred, &test), params });
        for &y in &cfg.params {
            grids.push(prediction_grid_for(&reg, kind, data.param_dim(), y, cfg)?);
        }
    }
    Ok(CompareReport { models, grids })
}
