use serde::{Deserialize, Serialize};

use super::data::TaijiDataset;
use crate::error::{Error, Result};
use crate::flows::{fit_eliminator, invert_padded, Eliminator, EliminatorConfig, ParaCFlowModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliminationReport {
    /// Mean `‖o(y, x)‖` on the evaluation samples.
    pub mean_residual_norm: f64,
    /// Median of `‖x − inverse(y, f̂_y(x))‖` where the inverse drops `o`.
    pub median_reconstruction_error: f64,
    pub max_reconstruction_error: f64,
    pub samples: usize,
    pub final_loss: f64,
}

/// Trains an eliminator for a Taiji flow on `train` and evaluates it on `test`.
pub fn eliminate_taiji(
    model: &ParaCFlowModel,
    train: &TaijiDataset,
    test: &TaijiDataset,
    cfg: &EliminatorConfig,
) -> Result<(Eliminator, EliminationReport)> {
    if test.is_empty() {
        return Err(Error::Argument("empty evaluation set".into()));
    }
    let (elim, trace) = fit_eliminator(model, &train.y, &train.x, cfg)?;
    let mean_residual_norm = elim.mean_residual_norm(model, &test.y, &test.x)?;
    let feats = model.features_batch(&test.y, &test.x)?;
    let mut errs = Vec::with_capacity(test.len());
    for i in 0..test.len() {
        let rec = invert_padded(model, &elim, test.y.row(i), &feats.row(i)[..2])?;
        let x = test.x.row(i);
        errs.push((rec[0] - x[0]).hypot(rec[1] - x[1]));
    }
    errs.sort_by(f64::total_cmp);
    let n = errs.len();
    let median = if n % 2 == 1 { errs[n / 2] } else { 0.5 * (errs[n / 2 - 1] + errs[n / 2]) };
    let report = EliminationReport {
        mean_residual_norm,
        median_reconstruction_error: median,
        max_reconstruction_error: errs[n - 1],
        samples: n,
        final_loss: trace.last().copied().unwrap_or(f64::NAN),
    };
    Ok((elim, report))
}
