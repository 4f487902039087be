use rand::Rng;
use serde::{Deserialize, Serialize};

use super::coupling::CouplingLayer;
use super::permutation::Permutation;
use super::stack::{FlowStack, FlowStep, StackTape};
use crate::error::{shape, Error, Result};
use crate::numkit::{
    gemm, rng_from, train_minibatch, Activation, GradTape, Mat, MlpNet, Parameterized, TrainConfig,
};

/// Architecture of a [`ParaCFlowModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParaCFlowConfig {
    pub action_dim: usize,
    pub context_dim: usize,
    /// Flow width `d`; must exceed `action_dim`.
    pub width: usize,
    pub n_layers: usize,
    /// Hidden widths of every σ and t conditioner.
    pub cond_hidden: Vec<usize>,
    /// Hidden widths of the prediction head; `None` means no head (feature-only model).
    pub head_hidden: Option<Vec<usize>>,
    #[serde(default)]
    pub activation: Activation,
    /// Start every coupling layer as the identity.
    #[serde(default)]
    pub identity_init: bool,
    /// Start the ascend matrix at zero (pure zero padding).
    #[serde(default)]
    pub zero_ascend: bool,
    /// Whether the ascend matrix is trained along with the flow.
    #[serde(default = "default_true")]
    pub train_ascend: bool,
}

fn default_true() -> bool {
    true
}

impl ParaCFlowConfig {
    /// Pass-through block size `d' = max(d_a, ⌊d/2⌋)`.
    pub fn split(&self) -> usize {
        self.action_dim.max(self.width / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.action_dim == 0 {
            return Err(Error::Argument("action_dim must be positive".into()));
        }
        if self.width <= self.action_dim {
            return Err(Error::Argument(format!(
                "flow width {} must exceed action dim {}",
                self.width, self.action_dim
            )));
        }
        if self.n_layers > 0 && self.split() >= self.width {
            return Err(Error::Argument(format!("split {} leaves no transformed block in width {}", self.split(), self.width)));
        }
        Ok(())
    }
}

/// `a ↦ (a, a·W)`.
pub fn ascend(a: &[f64], w: &Mat) -> Result<Vec<f64>> {
    if w.rows() != a.len() {
        return Err(shape(format!("ascend: action length {} vs W {}x{}", a.len(), w.rows(), w.cols())));
    }
    let mut out = a.to_vec();
    out.extend((0..w.cols()).map(|j| (0..w.rows()).map(|i| a[i] * w.get(i, j)).sum::<f64>()));
    Ok(out)
}

/// Samples `(c, a, b)` for scalar regression.
#[derive(Clone, Debug)]
pub struct ScalarDataset {
    pub contexts: Mat,
    pub actions: Mat,
    pub values: Vec<f64>,
}

/// Samples `(c, a, target)` where the target is matched by the leading feature coordinates.
#[derive(Clone, Debug)]
pub struct FeatureDataset {
    pub contexts: Mat,
    pub actions: Mat,
    pub targets: Mat,
}

impl ScalarDataset {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl FeatureDataset {
    pub fn len(&self) -> usize {
        self.targets.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.rows() == 0
    }
}

/// Parametric affine coupling flow with ascend map and prediction head:
///
/// `b̂(φ(c, a))`, `φ(c, a) = (φ_{c,N} P_N) ∘ ⋯ ∘ (φ_{c,1} P_1) ∘ φ₀(a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParaCFlowModel {
    config: ParaCFlowConfig,
    ascend: Mat,
    body: FlowStack,
    head: Option<MlpNet>,
    seed: u64,
}

struct ModelTape {
    x0: Mat,
    body: StackTape,
    head: Option<GradTape>,
}

impl ParaCFlowModel {
    pub fn new(config: ParaCFlowConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(seed);
        let (da, d) = (config.action_dim, config.width);
        let ascend = if config.zero_ascend {
            Mat::zeros(da, d - da)
        } else {
            let limit = (6.0 / d as f64).sqrt();
            Mat::from_fn(da, d - da, |_, _| rng.random_range(-limit..limit))
        };
        let split = config.split();
        let mut steps = Vec::with_capacity(config.n_layers);
        // labels[j]: original coordinate currently stored at position j
        let mut labels: Vec<usize> = (0..d).collect();
        let mut prev_block: Option<Vec<usize>> = None;
        for _ in 0..config.n_layers {
            let (perm, next, block) = loop {
                let perm = Permutation::random(d, &mut rng);
                let next = perm.apply_labels(&labels);
                let mut block = next[split..].to_vec();
                block.sort_unstable();
                // consecutive couplings on the same block collapse into one
                if prev_block.as_ref() != Some(&block) {
                    break (perm, next, block);
                }
            };
            labels = next;
            prev_block = Some(block);
            let layer = CouplingLayer::random(
                d,
                split,
                config.context_dim,
                &config.cond_hidden,
                config.activation,
                config.identity_init,
                &mut rng,
            )?;
            steps.push(FlowStep { perm, layer });
        }
        let head = match &config.head_hidden {
            Some(hidden) => {
                let mut dims = vec![d];
                dims.extend_from_slice(hidden);
                dims.push(1);
                Some(MlpNet::glorot(&dims, config.activation, &mut rng)?)
            }
            None => None,
        };
        Ok(ParaCFlowModel { config, ascend, body: FlowStack::new(steps)?, head, seed })
    }

    /// Assembles a model from explicit parts; used by checkpoint loading and tests.
    pub fn from_parts(config: ParaCFlowConfig, ascend: Mat, body: FlowStack, head: Option<MlpNet>, seed: u64) -> Result<Self> {
        config.validate()?;
        let (da, d) = (config.action_dim, config.width);
        if ascend.shape() != (da, d - da) {
            return Err(shape(format!("ascend matrix {:?}, expected {:?}", ascend.shape(), (da, d - da))));
        }
        for (i, s) in body.steps().iter().enumerate() {
            if s.layer.dim() != d || s.layer.cond_dim() != config.context_dim {
                return Err(shape(format!("flow step {i} does not match the config")));
            }
        }
        if let Some(h) = &head {
            if h.input_dim() != d || h.output_dim() != 1 {
                return Err(shape("head must map width -> 1"));
            }
        }
        Ok(ParaCFlowModel { config, ascend, body, head, seed })
    }

    pub fn config(&self) -> &ParaCFlowConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ascend_matrix(&self) -> &Mat {
        &self.ascend
    }

    pub fn ascend_matrix_mut(&mut self) -> &mut Mat {
        &mut self.ascend
    }

    pub fn body(&self) -> &FlowStack {
        &self.body
    }

    pub fn body_mut(&mut self) -> &mut FlowStack {
        &mut self.body
    }

    pub fn head(&self) -> Option<&MlpNet> {
        self.head.as_ref()
    }

    pub fn head_mut(&mut self) -> Option<&mut MlpNet> {
        self.head.as_mut()
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    fn check(&self, c: &[f64], a: &[f64]) -> Result<()> {
        if c.len() != self.config.context_dim || a.len() != self.config.action_dim {
            return Err(shape(format!(
                "model expects context {} and action {}, got {} and {}",
                self.config.context_dim,
                self.config.action_dim,
                c.len(),
                a.len()
            )));
        }
        Ok(())
    }

    /// `φ(c, a)`: ascend, then permute-and-couple through every layer.
    pub fn features(&self, c: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.check(c, a)?;
        self.body.forward(c, &ascend(a, &self.ascend)?)
    }

    /// Inverts the flow body: returns `ã⁽⁰⁾` with `φ_body(c, ã⁽⁰⁾) = y`.
    pub fn body_inverse(&self, c: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.config.width {
            return Err(shape(format!("body inverse expects width {}", self.config.width)));
        }
        self.body.inverse(c, y)
    }

    /// `b̂(φ(c, a))`.
    pub fn predict(&self, c: &[f64], a: &[f64]) -> Result<f64> {
        let head = self.head.as_ref().ok_or_else(|| Error::State("model has no prediction head".into()))?;
        let y = head.forward(&self.features(c, a)?)?[0];
        if !y.is_finite() {
            return Err(Error::Numeric("non-finite prediction".into()));
        }
        Ok(y)
    }

    pub fn ascend_batch(&self, actions: &Mat) -> Result<Mat> {
        if actions.cols() != self.config.action_dim {
            return Err(shape("action batch width"));
        }
        let mut lifted = Mat::zeros(actions.rows(), self.ascend.cols());
        gemm(false, actions, false, &self.ascend, 0.0, &mut lifted);
        actions.hcat(&lifted)
    }

    pub fn features_batch(&self, contexts: &Mat, actions: &Mat) -> Result<Mat> {
        self.body.forward_batch(contexts, &self.ascend_batch(actions)?, None)
    }

    pub fn predict_batch(&self, contexts: &Mat, actions: &Mat) -> Result<Vec<f64>> {
        let head = self.head.as_ref().ok_or_else(|| Error::State("model has no prediction head".into()))?;
        Ok(head.forward_batch(&self.features_batch(contexts, actions)?)?.into_vec())
    }

    fn forward_taped(&self, contexts: &Mat, actions: &Mat) -> Result<(Mat, ModelTape)> {
        let x0 = self.ascend_batch(actions)?;
        let mut body = StackTape::default();
        let feats = self.body.forward_batch(contexts, &x0, Some(&mut body))?;
        let (out, head) = match &self.head {
            Some(h) => {
                let mut t = GradTape::new();
                let out = t.forward(h, &feats)?;
                (out, Some(t))
            }
            None => (feats, None),
        };
        Ok((out, ModelTape { x0, body, head }))
    }

    /// Gradient of `<adjoint, output>` where output is the head output, or the
    /// features for a head-less model.
    fn backward(&self, tape: &ModelTape, actions: &Mat, adjoint: &Mat) -> Result<Vec<f64>> {
        let nw = self.ascend.data().len();
        let nb = self.body.param_count();
        let mut grad = vec![0.0; self.param_count()];
        let dfeat = match (&self.head, &tape.head) {
            (Some(h), Some(t)) => t.backward_into(h, adjoint, &mut grad[nw + nb..])?,
            _ => adjoint.clone(),
        };
        let (dx0, _) = self.body.backward(&tape.body, &dfeat, &mut grad[nw..nw + nb])?;
        if self.config.train_ascend {
            let da = self.config.action_dim;
            let dlift = dx0.cols_range(da, self.config.width);
            let mut gw = Mat::zeros(da, self.config.width - da);
            gemm(true, actions, false, &dlift, 0.0, &mut gw);
            grad[..nw].copy_from_slice(gw.data());
        }
        let _ = &tape.x0;
        Ok(grad)
    }

    /// Batch-mean squared error of the head output and its gradient.
    pub fn scalar_loss_grad(&self, contexts: &Mat, actions: &Mat, values: &[f64]) -> Result<(f64, Vec<f64>)> {
        if self.head.is_none() {
            return Err(Error::State("scalar regression needs a prediction head".into()));
        }
        let (out, tape) = self.forward_taped(contexts, actions)?;
        let n = values.len() as f64;
        let mut adj = Mat::zeros(values.len(), 1);
        let mut loss = 0.0;
        for (i, &b) in values.iter().enumerate() {
            let r = out.get(i, 0) - b;
            loss += r * r;
            adj.set(i, 0, 2.0 * r / n);
        }
        Ok((loss / n, self.backward(&tape, actions, &adj)?))
    }

    /// Mean squared error of the leading `targets.cols()` feature coordinates.
    pub fn feature_loss_grad(&self, contexts: &Mat, actions: &Mat, targets: &Mat) -> Result<(f64, Vec<f64>)> {
        let x0 = self.ascend_batch(actions)?;
        let mut body = StackTape::default();
        let feats = self.body.forward_batch(contexts, &x0, Some(&mut body))?;
        let k = targets.cols();
        if k > self.config.width || targets.rows() != feats.rows() {
            return Err(shape("feature targets"));
        }
        let scale = (targets.rows() * k) as f64;
        let mut adj = Mat::zeros(feats.rows(), feats.cols());
        let mut loss = 0.0;
        for i in 0..feats.rows() {
            for j in 0..k {
                let r = feats.get(i, j) - targets.get(i, j);
                loss += r * r;
                adj.set(i, j, 2.0 * r / scale);
            }
        }
        let tape = ModelTape { x0, body, head: None };
        let nw = self.ascend.data().len();
        let nb = self.body.param_count();
        let mut grad = vec![0.0; self.param_count()];
        let (dx0, _) = self.body.backward(&tape.body, &adj, &mut grad[nw..nw + nb])?;
        if self.config.train_ascend {
            let da = self.config.action_dim;
            let mut gw = Mat::zeros(da, self.config.width - da);
            gemm(true, actions, false, &dx0.cols_range(da, self.config.width), 0.0, &mut gw);
            grad[..nw].copy_from_slice(gw.data());
        }
        Ok((loss / scale, grad))
    }

    /// Minimizes `(1/M) Σ (b_j − b̂(φ(c_j, a_j)))²`; returns per-epoch mean loss.
    pub fn train_mse(&mut self, data: &ScalarDataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::Argument("empty dataset".into()));
        }
        train_minibatch(self, data.len(), cfg, |m, idx| {
            let vals: Vec<f64> = idx.iter().map(|&i| data.values[i]).collect();
            m.scalar_loss_grad(&data.contexts.select_rows(idx), &data.actions.select_rows(idx), &vals)
        })
    }

    /// Fits the leading feature coordinates to `data.targets`.
    pub fn train_features(&mut self, data: &FeatureDataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::Argument("empty dataset".into()));
        }
        train_minibatch(self, data.len(), cfg, |m, idx| {
            m.feature_loss_grad(
                &data.contexts.select_rows(idx),
                &data.actions.select_rows(idx),
                &data.targets.select_rows(idx),
            )
        })
    }
}

impl Parameterized for ParaCFlowModel {
    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        f(self.ascend.data());
        self.body.visit_params(f);
        if let Some(h) = &self.head {
            h.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.ascend.data_mut());
        self.body.visit_params_mut(f);
        if let Some(h) = &mut self.head {
            h.visit_params_mut(f);
        }
    }
}
