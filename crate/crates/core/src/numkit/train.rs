use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::mat::Mat;
use super::mlp::{GradTape, MlpNet, Parameterized};
use super::rng::rng_from;
use crate::error::{shape, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Seeds the minibatch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 64, epochs: 200, lr: 0.01, seed: 0 }
    }
}

/// Shuffled minibatch Adam over `n` samples.
///
/// `loss_grad(model, batch)` returns the batch-mean loss and its gradient in
/// the model's parameter order. Returns the per-epoch sample-weighted mean loss.
pub fn train_minibatch<M, F>(model: &mut M, n: usize, cfg: &TrainConfig, mut loss_grad: F) -> Result<Vec<f64>>
where
    M: Parameterized + ?Sized,
    F: FnMut(&M, &[usize]) -> Result<(f64, Vec<f64>)>,
{
    if n == 0 {
        return Err(Error::Argument("empty training set".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Argument("batch size must be positive".into()));
    }
    let mut adam = AdamState::new(model.param_count());
    let mut rng = rng_from(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = loss_grad(model, batch)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}")));
            }
            adam.step_model(model, &grad, cfg.lr)?;
            total += loss * batch.len() as f64;
        }
        trace.push(total / n as f64);
    }
    Ok(trace)
}

/// Batch-mean squared error of `net` on `(inputs, targets)` and its parameter gradient.
pub fn mlp_mse_grad(net: &MlpNet, inputs: &Mat, targets: &Mat) -> Result<(f64, Vec<f64>)> {
    let mut tape = GradTape::new();
    let out = tape.forward(net, inputs)?;
    if out.shape() != targets.shape() {
        return Err(shape(format!("targets {:?} vs outputs {:?}", targets.shape(), out.shape())));
    }
    let scale = out.data().len().max(1) as f64;
    let mut adj = out;
    let mut loss = 0.0;
    for (a, t) in adj.data_mut().iter_mut().zip(targets.data()) {
        let r = *a - t;
        loss += r * r;
        *a = 2.0 * r / scale;
    }
    let mut grad = vec![0.0; net.param_count()];
    tape.backward_into(net, &adj, &mut grad)?;
    Ok((loss / scale, grad))
}

/// Fits `net` to `(inputs, targets)` by minibatch Adam on the mean squared error.
pub fn train_mlp_mse(net: &mut MlpNet, inputs: &Mat, targets: &Mat, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if inputs.rows() != targets.rows() {
        return Err(shape(format!("{} inputs vs {} targets", inputs.rows(), targets.rows())));
    }
    train_minibatch(net, inputs.rows(), cfg, |m, idx| {
        mlp_mse_grad(m, &inputs.select_rows(idx), &targets.select_rows(idx))
    })
}
