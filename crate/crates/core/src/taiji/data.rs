use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::groundtruth::taiji_apply;
use crate::error::{Error, Result};
use crate::flows::FeatureDataset;
use crate::numkit::{rng_from, Mat};

/// Width of the noisy parameter vector in the small-sample task.
pub const VECTOR_PARAM_DIM: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaijiMode {
    /// `y ~ U[0, 1]`.
    Scalar,
    /// `y^{(j)} ~ N(y, 0.4²)` for `j = 1..100`, target at the mean of the `y^{(j)}`.
    Vector100,
}

/// Samples `(x_i, y_i, f_{y_i}(x_i))`; for [`TaijiMode::Vector100`] the target
/// uses the average of the parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct TaijiDataset {
    pub mode: TaijiMode,
    pub x: Mat,
    pub y: Mat,
    pub target: Mat,
}

/// Standard deviation of the parameter noise (variance 0.16).
pub const VECTOR_PARAM_STD: f64 = 0.4;

impl TaijiDataset {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn param_dim(&self) -> usize {
        self.y.cols()
    }

    /// The parameter that generated sample `i`'s target.
    pub fn effective_param(&self, i: usize) -> f64 {
        let r = self.y.row(i);
        r.iter().sum::<f64>() / r.len() as f64
    }

    /// View as a flow training set: context `y`, action `x`, feature target `f_y(x)`.
    pub fn to_features(&self) -> FeatureDataset {
        FeatureDataset { contexts: self.y.clone(), actions: self.x.clone(), targets: self.target.clone() }
    }

    pub fn subset(&self, idx: &[usize]) -> TaijiDataset {
        TaijiDataset {
            mode: self.mode,
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            target: self.target.select_rows(idx),
        }
    }
}

pub fn gen_taiji_dataset(n: usize, seed: u64, mode: TaijiMode) -> Result<TaijiDataset> {
    if n == 0 {
        return Err(Error::Argument("dataset size must be positive".into()));
    }
    let mut rng = rng_from(seed);
    let noise = Normal::new(0.0, VECTOR_PARAM_STD).map_err(|e| Error::Argument(e.to_string()))?;
    let k = match mode {
        TaijiMode::Scalar => 1,
        TaijiMode::Vector100 => VECTOR_PARAM_DIM,
    };
    let mut x = Mat::zeros(n, 2);
    let mut y = Mat::zeros(n, k);
    let mut target = Mat::zeros(n, 2);
    for i in 0..n {
        let xi = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        let yi: f64 = rng.random_range(0.0..=1.0);
        x.row_mut(i).copy_from_slice(&xi);
        let eff = match mode {
            TaijiMode::Scalar => {
                y.set(i, 0, yi);
                yi
            }
            TaijiMode::Vector100 => {
                for j in 0..k {
                    y.set(i, j, yi + noise.sample(&mut rng));
                }
                y.row(i).iter().sum::<f64>() / k as f64
            }
        };
        target.row_mut(i).copy_from_slice(&taiji_apply(eff, &xi));
    }
    Ok(TaijiDataset { mode, x, y, target })
}
