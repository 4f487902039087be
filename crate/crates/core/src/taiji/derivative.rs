use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::groundtruth::{taiji_dx, taiji_dy};
use super::model::disc_grid;
use crate::error::{Error, Result};
use crate::flows::ParaCFlowModel;
use crate::numkit::fd_jacobian;

/// Step of the central differences taken through the trained model.
pub const MODEL_FD_STEP: f64 = 1e-5;

/// Derivatives of the model and the ground truth at one point. Matrices are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeRow {
    pub x: [f64; 2],
    pub dist_to_circle: f64,
    pub model_dx: [f64; 4],
    pub true_dx: [f64; 4],
    pub model_dy: [f64; 2],
    pub true_dy: [f64; 2],
}

impl DerivativeRow {
    pub fn rho(&self) -> f64 {
        self.x[0].hypot(self.x[1])
    }

    /// `‖D̂ − D‖_F / ‖D‖_F` for the full 2×3 derivative `[∂/∂x | ∂/∂y]`.
    pub fn relative_error(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in self.model_dx.iter().chain(&self.model_dy).zip(self.true_dx.iter().chain(&self.true_dy)) {
            num += (a - b) * (a - b);
            den += b * b;
        }
        (num / den).sqrt()
    }

    pub fn relative_error_dx(&self) -> f64 {
        rel(&self.model_dx, &self.true_dx)
    }

    /// Angle between the model and true `∂f/∂y` vectors, in radians.
    pub fn angle_error_dy(&self) -> f64 {
        let (a, b) = (self.model_dy, self.true_dy);
        let cross = a[0] * b[1] - a[1] * b[0];
        let dot = a[0] * b[0] + a[1] * b[1];
        cross.atan2(dot).abs()
    }

    pub fn magnitude_error_dy(&self) -> f64 {
        (self.model_dy[0].hypot(self.model_dy[1]) - self.true_dy[0].hypot(self.true_dy[1])).abs()
    }
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    let den: f64 = b.iter().map(|q| q * q).sum();
    (num / den).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSummary {
    pub y: f64,
    pub points: usize,
    /// Median full-derivative relative error over `ρ < interior_rho`.
    pub median_rel_error_interior: f64,
    pub median_rel_error_dx_interior: f64,
    pub interior_rho: f64,
    /// Medians over points outside the annulus `|ρ − 1| ≤ annulus`.
    pub median_angle_error_dy: f64,
    pub median_magnitude_error_dy: f64,
    pub annulus: f64,
    /// Median full-derivative relative error inside the annulus; reported only.
    pub median_rel_error_annulus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub rows: Vec<DerivativeRow>,
    pub summary: DerivativeSummary,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Compares finite-difference derivatives of a scalar-parameter Taiji model
/// with the analytic ones on a `points × points` grid over `[−1, 1]²` at parameter `y`.
pub fn derivative_report(model: &ParaCFlowModel, y: f64, points: usize) -> Result<DerivativeReport> {
    if model.config().context_dim != 1 {
        return Err(Error::Argument("derivative report needs a scalar-parameter model".into()));
    }
    let mut rows = Vec::new();
    for x in disc_grid(points, f64::INFINITY) {
        let rho = x[0].hypot(x[1]);
        if rho == 1.0 {
            continue;
        }
        let failed = RefCell::new(None);
        let j = fd_jacobian(
            |v| match model.features(&v[2..], &v[..2]) {
                Ok(f) => f[..2].to_vec(),
                Err(e) => {
                    *failed.borrow_mut() = Some(e);
                    vec![0.0, 0.0]
                }
            },
            &[x[0], x[1], y],
            MODEL_FD_STEP,
        );
        if let Some(e) = failed.into_inner() {
            return Err(e);
        }
        let t = taiji_dx(y, &x);
        let dy = taiji_dy(y, &x).value;
        rows.push(DerivativeRow {
            x,
            dist_to_circle: (rho - 1.0).abs(),
            model_dx: [j.get(0, 0), j.get(0, 1), j.get(1, 0), j.get(1, 1)],
            true_dx: [t.get(0, 0), t.get(0, 1), t.get(1, 0), t.get(1, 1)],
            model_dy: [j.get(0, 2), j.get(1, 2)],
            true_dy: dy,
        });
    }
    let (interior_rho, annulus) = (0.9, 0.1);
    let interior: Vec<&DerivativeRow> = rows.iter().filter(|r| r.rho() < interior_rho).collect();
    let away: Vec<&DerivativeRow> = rows.iter().filter(|r| r.dist_to_circle > annulus).collect();
    let summary = DerivativeSummary {
        y,
        points,
        median_rel_error_interior: median(interior.iter().map(|r| r.relative_error()).collect()),
        median_rel_error_dx_interior: median(interior.iter().map(|r| r.relative_error_dx()).collect()),
        interior_rho,
        median_angle_error_dy: median(away.iter().map(|r| r.angle_error_dy()).collect()),
        median_magnitude_error_dy: median(away.iter().map(|r| r.magnitude_error_dy()).collect()),
        annulus,
        median_rel_error_annulus: median(
            rows.iter().filter(|r| r.dist_to_circle <= annulus).map(|r| r.relative_error()).collect(),
        ),
    };
    Ok(DerivativeReport { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taiji::model::TaijiFlowConfig;

    #[test]
    fn untrained_model_has_constant_derivatives() {
        let model = ParaCFlowModel::new(TaijiFlowConfig::default().flow_config(1), 0).unwrap();
        let rep = derivative_report(&model, 0.3, 11).unwrap();
        let first = rep.rows[0].model_dx;
        for r in &rep.rows {
            for (a, b) in r.model_dx.iter().zip(first) {
                assert!((a - b).abs() < 1e-8);
                assert!(a.abs() < 1e-8 || (a.abs() - 1.0).abs() < 1e-8);
            }
            assert!(r.model_dy.iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(vec![]).is_nan());
    }

    #[test]
    fn rejects_vector_models() {
        let model = ParaCFlowModel::new(TaijiFlowConfig::default().flow_config(3), 0).unwrap();
        assert!(derivative_report(&model, 0.5, 5).is_err());
    }
}
