use serde::{Deserialize, Serialize};

use crate::diffeo::{BoxBounds, SmoothMap};
use crate::error::Result;
use crate::numkit::Mat;

/// Rotation angle `y·arccos(min(ρ, 1))`.
pub fn taiji_angle(y: f64, x: &[f64]) -> f64 {
    let rho = x[0].hypot(x[1]);
    y * rho.min(1.0).acos()
}

/// `f_y(ρ cos θ, ρ sin θ) = (ρ cos θ̃, ρ sin θ̃)` with `θ̃ = θ + y·arccos(min(ρ, 1))`.
pub fn taiji_apply(y: f64, x: &[f64]) -> [f64; 2] {
    let a = taiji_angle(y, x);
    if a == 0.0 {
        return [x[0], x[1]];
    }
    let (s, c) = a.sin_cos();
    [c * x[0] - s * x[1], s * x[0] + c * x[1]]
}

/// `∂f/∂y`, flagged as singular on the unit circle where `f` is not differentiable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaijiDerivative {
    pub value: [f64; 2],
    pub singular: bool,
}

/// `∂f_y(x)/∂y = arccos(min(ρ, 1))·(−f₂, f₁)`; zero outside the unit disc.
pub fn taiji_dy(y: f64, x: &[f64]) -> TaijiDerivative {
    let rho = x[0].hypot(x[1]);
    let w = rho.min(1.0).acos();
    let f = taiji_apply(y, x);
    TaijiDerivative { value: [-w * f[1], w * f[0]], singular: rho == 1.0 }
}

/// Analytic `∂f_y(x)/∂x` (2×2). Not defined on the unit circle, where the
/// interior limit is returned.
pub fn taiji_dx(y: f64, x: &[f64]) -> Mat {
    let rho = x[0].hypot(x[1]);
    if rho > 1.0 {
        return Mat::identity(2);
    }
    let a = taiji_angle(y, x);
    let (s, c) = a.sin_cos();
    let mut j = Mat::from_vec(2, 2, vec![c, -s, s, c]).expect("2x2");
    if rho > 0.0 && rho < 1.0 {
        // f = R(α)x, Df = R(α) + (R'(α)x) ∇αᵀ, ∇α = −y x / (ρ √(1 − ρ²)).
        let f = [c * x[0] - s * x[1], s * x[0] + c * x[1]];
        let rx = [-f[1], f[0]];
        let k = -y / (rho * (1.0 - rho * rho).sqrt());
        let grad = [k * x[0], k * x[1]];
        for r in 0..2 {
            for col in 0..2 {
                j.set(r, col, j.get(r, col) + rx[r] * grad[col]);
            }
        }
    }
    j
}

/// `f_y` as a compactly supported map on `[−1, 1]²`.
pub fn taiji_map(y: f64) -> Result<SmoothMap> {
    Ok(SmoothMap::new(2, BoxBounds::cube(2, -1.0, 1.0)?, move |x| taiji_apply(y, x).to_vec())?
        .with_jacobian(move |x| taiji_dx(y, x)))
}

/// Colouring of the plane used to compare maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLabel {
    Black,
    White,
    Yellow,
}

impl RegionLabel {
    pub fn of(x: &[f64]) -> Self {
        if x[0].hypot(x[1]) > 1.0 {
            RegionLabel::Yellow
        } else if x[1] > 0.0 {
            RegionLabel::Black
        } else {
            RegionLabel::White
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RegionLabel::Black => "black",
            RegionLabel::White => "white",
            RegionLabel::Yellow => "yellow",
        }
    }
}
