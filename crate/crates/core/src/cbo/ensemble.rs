use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::benchmark::{best_index, Sense};
use super::nets::{AppendResnet, AscendMlp, SurrogateNet};
use crate::error::{shape, Error, Result};
use crate::flows::{ParaCFlowConfig, ParaCFlowModel};
use crate::numkit::{derive_seed, rng_from, train_minibatch, Activation, Mat, MlpNet, Parameterized, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[serde(rename = "paracflow")]
    ParaCFlow,
    Mlp,
    MlpAscend,
    Resnet,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::ParaCFlow, Family::Mlp, Family::MlpAscend, Family::Resnet];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::ParaCFlow => "paracflow",
            Family::Mlp => "mlp",
            Family::MlpAscend => "mlp_ascend",
            Family::Resnet => "resnet",
        }
    }

    fn index(&self) -> u64 {
        *self as u64
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown surrogate family `{s}`")))
    }
}

/// Depth and width of a base model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurrogateShape {
    pub hidden_layers: usize,
    pub hidden_nodes: usize,
    pub flows: usize,
}

/// Context dimensions with a published shape table.
pub const TABLE_CONTEXT_DIMS: [usize; 3] = [5, 10, 20];

/// Flow width of the Para-CFlow surrogate: `(a, aW)` with `W` of size 1×3.
pub const PARACFLOW_WIDTH: usize = 4;

pub const ENSEMBLE_SIZE: usize = 5;

/// Inputs live in `[−3, 3]` and are divided by this before reaching the nets.
pub const INPUT_SCALE: f64 = 3.0;

/// Shape for `d_c`, taken from the nearest tabulated context dimension (ties go down).
pub fn table_shape(family: Family, context_dim: usize) -> SurrogateShape {
    let row = TABLE_CONTEXT_DIMS
        .iter()
        .copied()
        .min_by_key(|&t| (t.abs_diff(context_dim), t))
        .unwrap_or(5);
    let (hidden_layers, hidden_nodes, flows) = match (family, row) {
        (Family::ParaCFlow, 10) => (0, 128, 3),
        (Family::ParaCFlow, _) => (1, 64, 3),
        (_, 5) => (2, 32, 0),
        (_, 10) => (2, 64, 0),
        _ => (3, 64, 0),
    };
    SurrogateShape { hidden_layers, hidden_nodes, flows }
}

/// Para-CFlow surrogate: one-hidden-layer conditioners of the tabulated width
/// and a head with the tabulated number of hidden layers.
pub fn paracflow_config(context_dim: usize, shape: SurrogateShape) -> ParaCFlowConfig {
    ParaCFlowConfig {
        action_dim: 1,
        context_dim,
        width: PARACFLOW_WIDTH,
        n_layers: shape.flows,
        cond_hidden: vec![shape.hidden_nodes],
        head_hidden: Some(vec![shape.hidden_nodes; shape.hidden_layers]),
        activation: Activation::Tanh,
        identity_init: false,
        zero_ascend: false,
        train_ascend: true,
    }
}

pub fn build_net(family: Family, context_dim: usize, seed: u64) -> Result<SurrogateNet> {
    if context_dim == 0 {
        return Err(Error::Argument("context dimension must be positive".into()));
    }
    let s = table_shape(family, context_dim);
    let hidden = vec![s.hidden_nodes; s.hidden_layers];
    let mut rng = rng_from(seed);
    Ok(match family {
        Family::ParaCFlow => SurrogateNet::ParaCFlow(ParaCFlowModel::new(paracflow_config(context_dim, s), seed)?),
        Family::Mlp => {
            let mut dims = vec![context_dim + 1];
            dims.extend_from_slice(&hidden);
            dims.push(1);
            SurrogateNet::Mlp(MlpNet::glorot(&dims, Activation::Tanh, &mut rng)?)
        }
        Family::MlpAscend => SurrogateNet::MlpAscend(AscendMlp::glorot(
            context_dim,
            5usize.max(context_dim),
            &hidden,
            Activation::Tanh,
            &mut rng,
        )?),
        Family::Resnet => SurrogateNet::Resnet(AppendResnet::glorot(context_dim, &hidden, Activation::Tanh, &mut rng)?),
    })
}

/// What the BO loop needs from a surrogate.
pub trait Surrogate: Send {
    fn member_count(&self) -> usize;

    /// Predictions of every member along an action sweep at context `c`:
    /// rows are members, columns are actions.
    fn member_sweep(&self, c: &[f64], actions: &[f64]) -> Result<Mat>;

    fn fit(&mut self, contexts: &Mat, actions: &[f64], values: &[f64]) -> Result<()>;
}

/// Ensemble of independently initialized base models of one family.
/// Targets are standardized with the statistics of the latest fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateEnsemble {
    family: Family,
    context_dim: usize,
    members: Vec<SurrogateNet>,
    seeds: Vec<u64>,
    pub train: TrainConfig,
    target_mean: f64,
    target_std: f64,
    fits: u64,
    final_losses: Vec<f64>,
}

impl SurrogateEnsemble {
    pub fn with_members(family: Family, context_dim: usize, n_members: usize, seed: u64) -> Result<Self> {
        if n_members == 0 {
            return Err(Error::Argument("ensemble needs at least one member".into()));
        }
        let seeds: Vec<u64> = (0..n_members as u64).map(|i| derive_seed(derive_seed(seed, family.index()), i)).collect();
        let members = seeds.iter().map(|&s| build_net(family, context_dim, s)).collect::<Result<Vec<_>>>()?;
        Ok(SurrogateEnsemble {
            family,
            context_dim,
            members,
            seeds,
            train: TrainConfig::default(),
            target_mean: 0.0,
            target_std: 1.0,
            fits: 0,
            final_losses: vec![],
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn members(&self) -> &[SurrogateNet] {
        &self.members
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn is_fitted(&self) -> bool {
        self.fits > 0
    }

    /// Per-member final-epoch loss of the latest fit, in standardized units.
    pub fn final_losses(&self) -> &[f64] {
        &self.final_losses
    }

    /// Trainable parameters of one member.
    pub fn member_param_count(&self) -> usize {
        self.members[0].param_count()
    }

    fn inputs(&self, contexts: &Mat, actions: &[f64]) -> Result<Mat> {
        if contexts.cols() != self.context_dim || contexts.rows() != actions.len() {
            return Err(shape(format!(
                "contexts {:?} vs {} actions (context dim {})",
                contexts.shape(),
                actions.len(),
                self.context_dim
            )));
        }
        let d = self.context_dim;
        Ok(Mat::from_fn(actions.len(), d + 1, |i, j| {
            if j < d {
                contexts.get(i, j) / INPUT_SCALE
            } else {
                actions[i] / INPUT_SCALE
            }
        }))
    }
}

/// Five members, seeds derived from `seed` and the family.
pub fn build_surrogate(family: Family, context_dim: usize, seed: u64) -> Result<SurrogateEnsemble> {
    SurrogateEnsemble::with_members(family, context_dim, ENSEMBLE_SIZE, seed)
}

impl Surrogate for SurrogateEnsemble {
    fn member_count(&self) -> usize {
        self.members.len()
    }

    fn member_sweep(&self, c: &[f64], actions: &[f64]) -> Result<Mat> {
        if !self.is_fitted() {
            return Err(Error::State("surrogate ensemble has not been trained".into()));
        }
        if c.len() != self.context_dim {
            return Err(shape(format!("context of dim {} expected {}", c.len(), self.context_dim)));
        }
        let ctx = Mat::from_fn(actions.len(), c.len(), |_, j| c[j]);
        let x = self.inputs(&ctx, actions)?;
        let mut out = Mat::zeros(self.members.len(), actions.len());
        for (m, net) in self.members.iter().enumerate() {
            for (o, p) in out.row_mut(m).iter_mut().zip(net.predict_batch(&x)?) {
                *o = self.target_mean + self.target_std * p;
            }
        }
        Ok(out)
    }

    /// Trains every member on the standardized data; members run on separate threads.
    fn fit(&mut self, contexts: &Mat, actions: &[f64], values: &[f64]) -> Result<()> {
        if values.len() != actions.len() {
            return Err(shape(format!("{} actions vs {} values", actions.len(), values.len())));
        }
        if values.is_empty() {
            return Err(Error::Argument("empty training set".into()));
        }
        let x = self.inputs(contexts, actions)?;
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let y: Vec<f64> = values.iter().map(|v| (v - mean) / std).collect();
        let fit_index = self.fits;
        let base = self.train.clone();
        let results: Vec<Result<f64>> = std::thread::scope(|s| {
            let handles: Vec<_> = self
                .members
                .iter_mut()
                .zip(&self.seeds)
                .map(|(net, &seed)| {
                    let (x, y) = (&x, &y);
                    let cfg = TrainConfig { seed: derive_seed(seed, fit_index + 1), ..base.clone() };
                    s.spawn(move || {
                        let trace = train_minibatch(net, y.len(), &cfg, |m, idx| {
                            let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
                            m.mse_grad(&x.select_rows(idx), &yb)
                        })?;
                        Ok(trace.last().copied().unwrap_or(f64::NAN))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(Error::State("training thread panicked".into())))).collect()
        });
        self.final_losses = results.into_iter().collect::<Result<Vec<_>>>()?;
        self.target_mean = mean;
        self.target_std = std;
        self.fits += 1;
        Ok(())
    }
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Ensemble mean and population standard deviation at `(c, a)`.
pub fn ensemble_predict(ens: &dyn Surrogate, c: &[f64], a: f64) -> Result<(f64, f64)> {
    Ok(mean_std(&ens.member_sweep(c, &[a])?.column(0)))
}

/// `argmin_a mean(a) − κ·std(a)` (or `argmax mean + κ·std` when maximizing); ties go to the smallest action.
pub fn acquire_lcb(ens: &dyn Surrogate, c: &[f64], grid: &[f64], kappa: f64, sense: Sense) -> Result<f64> {
    if !(kappa >= 0.0) {
        return Err(Error::Argument(format!("kappa must be non-negative, got {kappa}")));
    }
    let preds = ens.member_sweep(c, grid)?;
    let scores: Vec<f64> = (0..grid.len())
        .map(|j| {
            let (m, s) = mean_std(&preds.column(j));
            match sense {
                Sense::Minimize => m - kappa * s,
                Sense::Maximize => m + kappa * s,
            }
        })
        .collect();
    let i = best_index(&scores, sense).ok_or_else(|| Error::Argument("empty action grid".into()))?;
    Ok(grid[i])
}

/// Optimizer over the grid of one uniformly drawn member.
pub fn acquire_thompson<R: Rng + ?Sized>(
    ens: &dyn Surrogate,
    c: &[f64],
    grid: &[f64],
    sense: Sense,
    rng: &mut R,
) -> Result<f64> {
    let preds = ens.member_sweep(c, grid)?;
    let m = rng.random_range(0..preds.rows());
    let i = best_index(preds.row(m), sense).ok_or_else(|| Error::Argument("empty action grid".into()))?;
    Ok(grid[i])
}
