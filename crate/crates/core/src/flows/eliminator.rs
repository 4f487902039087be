use serde::{Deserialize, Serialize};

use super::coupling::CouplingLayer;
use super::model::ParaCFlowModel;
use super::permutation::Permutation;
use super::stack::{FlowStack, FlowStep, StackTape};
use crate::error::{shape, Error, Result};
use crate::numkit::{rng_from, train_minibatch, Activation, Mat, Parameterized, TrainConfig};

/// Coupling layers appended after a padded flow that drive the auxiliary
/// block of its output towards zero while leaving the leading block untouched.
///
/// Scale nets are held at zero, so every layer is a pure shift of the auxiliary block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eliminator {
    lead: usize,
    layers: FlowStack,
}

/// Settings for [`fit_eliminator`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EliminatorConfig {
    pub n_layers: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for EliminatorConfig {
    fn default() -> Self {
        EliminatorConfig {
            n_layers: 2,
            hidden: vec![16, 16],
            activation: Activation::Tanh,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl Eliminator {
    /// Identity eliminator for a flow of width `width` whose leading `lead` coordinates are kept.
    pub fn identity(width: usize, lead: usize, cond_dim: usize, n_layers: usize, hidden: &[usize], activation: Activation) -> Result<Self> {
        let steps = (0..n_layers)
            .map(|_| {
                Ok(FlowStep {
                    perm: Permutation::identity(width),
                    layer: CouplingLayer::identity(width, lead, cond_dim, hidden, activation)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(lead, FlowStack::new(steps)?)
    }

    pub fn new(lead: usize, layers: FlowStack) -> Result<Self> {
        for (i, s) in layers.steps().iter().enumerate() {
            if s.layer.split() != lead || !s.perm.is_identity() {
                return Err(Error::Argument(format!(
                    "eliminator step {i} must keep the leading {lead} coordinates fixed"
                )));
            }
        }
        Ok(Eliminator { lead, layers })
    }

    pub fn lead(&self) -> usize {
        self.lead
    }

    pub fn layers(&self) -> &FlowStack {
        &self.layers
    }

    pub fn forward(&self, c: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.layers.forward(c, y)
    }

    pub fn inverse(&self, c: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.layers.inverse(c, z)
    }

    /// `o(c, a)`: auxiliary block of the eliminated flow output.
    pub fn residual(&self, model: &ParaCFlowModel, c: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let z = self.forward(c, &model.features(c, a)?)?;
        Ok(z[self.lead..].to_vec())
    }

    /// Mean Euclidean norm of `o` over a batch.
    pub fn mean_residual_norm(&self, model: &ParaCFlowModel, contexts: &Mat, actions: &Mat) -> Result<f64> {
        let n = contexts.rows();
        if n == 0 {
            return Err(Error::Argument("empty evaluation set".into()));
        }
        let z = self.layers.forward_batch(contexts, &model.features_batch(contexts, actions)?, None)?;
        let total: f64 = (0..n)
            .map(|i| z.row(i)[self.lead..].iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum();
        Ok(total / n as f64)
    }

    fn loss_grad(&self, contexts: &Mat, feats: &Mat) -> Result<(f64, Vec<f64>)> {
        let mut tape = StackTape::default();
        let z = self.layers.forward_batch(contexts, feats, Some(&mut tape))?;
        let aux = z.cols() - self.lead;
        let scale = (z.rows() * aux) as f64;
        let mut adj = Mat::zeros(z.rows(), z.cols());
        let mut loss = 0.0;
        for i in 0..z.rows() {
            for j in self.lead..z.cols() {
                let r = z.get(i, j);
                loss += r * r;
                adj.set(i, j, 2.0 * r / scale);
            }
        }
        let mut grad = vec![0.0; self.layers.param_count()];
        self.layers.backward(&tape, &adj, &mut grad)?;
        let mut off = 0;
        for s in self.layers.steps() {
            let ns = s.layer.sigma_net().param_count();
            grad[off..off + ns].fill(0.0);
            off += s.layer.param_count();
        }
        Ok((loss / scale, grad))
    }
}

impl Parameterized for Eliminator {
    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        self.layers.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.layers.visit_params_mut(f);
    }
}

/// Trains an eliminator so that the auxiliary coordinates of
/// `eliminator(φ(c, a))` vanish on the given samples. The flow itself is frozen.
pub fn fit_eliminator(model: &ParaCFlowModel, contexts: &Mat, actions: &Mat, cfg: &EliminatorConfig) -> Result<(Eliminator, Vec<f64>)> {
    if contexts.rows() != actions.rows() {
        return Err(shape("eliminator samples: context and action counts differ"));
    }
    let mcfg = model.config();
    let mut rng = rng_from(cfg.seed);
    let steps = (0..cfg.n_layers)
        .map(|_| {
            let mut layer = CouplingLayer::random(
                mcfg.width,
                mcfg.action_dim,
                mcfg.context_dim,
                &cfg.hidden,
                cfg.activation,
                true,
                &mut rng,
            )?;
            layer.sigma_net_mut().visit_params_mut(&mut |p| p.fill(0.0));
            Ok(FlowStep { perm: Permutation::identity(mcfg.width), layer })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut elim = Eliminator::new(mcfg.action_dim, FlowStack::new(steps)?)?;
    let feats = model.features_batch(contexts, actions)?;
    let trace = train_minibatch(&mut elim, contexts.rows(), &cfg.train, |e, idx| {
        e.loss_grad(&contexts.select_rows(idx), &feats.select_rows(idx))
    })?;
    Ok((elim, trace))
}

/// Recovers the action from `(c, x̂)` by inverting the eliminator and the flow
/// body on `(x̂, 0)`; the padded coordinates of the result are dropped.
pub fn invert_padded(model: &ParaCFlowModel, elim: &Eliminator, c: &[f64], xhat: &[f64]) -> Result<Vec<f64>> {
    let d = model.width();
    if xhat.len() != elim.lead() || elim.lead() != model.config().action_dim {
        return Err(shape(format!("x̂ has length {}, eliminator keeps {}", xhat.len(), elim.lead())));
    }
    let mut z = xhat.to_vec();
    z.resize(d, 0.0);
    let y = elim.inverse(c, &z)?;
    let x = model.body_inverse(c, &y)?;
    Ok(x[..model.config().action_dim].to_vec())
}
