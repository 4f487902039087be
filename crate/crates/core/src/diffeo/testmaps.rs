//! Compactly supported near-identity maps with analytic Jacobians.

use rand::Rng;

use super::grid::{BoxBounds, GridSpec};
use super::map::SmoothMap;
use super::split::near_identity_delta;
use crate::error::Result;
use crate::numkit::{rng_from, Mat};

/// Standard bump `exp(−1/(1−t²))` on `(−1, 1)` and its derivative.
pub fn bump(t: f64) -> (f64, f64) {
    if t.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - t * t;
    let v = (-1.0 / q).exp();
    (v, v * (-2.0 * t / (q * q)))
}

/// Product bump `w(x) = Π bump(x_j)` and its gradient.
fn bump_product(x: &[f64]) -> (f64, Vec<f64>) {
    let parts: Vec<(f64, f64)> = x.iter().map(|&t| bump(t)).collect();
    let w: f64 = parts.iter().map(|p| p.0).product();
    let grad = (0..x.len())
        .map(|j| parts.iter().enumerate().map(|(i, p)| if i == j { p.1 } else { p.0 }).product())
        .collect();
    (w, grad)
}

/// `x + ε·(sin(x₂)·w(x), cos(x₁)·w(x))` with support `[−1, 1]²`.
pub fn sin_cos_bump_map(eps: f64) -> SmoothMap {
    let support = BoxBounds::cube(2, -1.0, 1.0).expect("valid box");
    SmoothMap::new(2, support, move |x| {
        let (w, _) = bump_product(x);
        vec![x[0] + eps * x[1].sin() * w, x[1] + eps * x[0].cos() * w]
    })
    .expect("valid map")
    .with_jacobian(move |x| {
        let (w, gw) = bump_product(x);
        let (s, c) = (x[1].sin(), x[0].cos());
        Mat::from_vec(
            2,
            2,
            vec![
                1.0 + eps * s * gw[0],
                eps * (x[1].cos() * w + s * gw[1]),
                eps * (-x[0].sin() * w + c * gw[0]),
                1.0 + eps * c * gw[1],
            ],
        )
        .expect("2x2")
    })
}

/// `f_i(x) = x_i + ε·w(x)·sin(a_i·x + b_i)` with random `a`, `b`, support
/// `[−1, 1]^d`, and `ε` scaled so the δ measured on a reference grid equals `delta`.
pub fn bump_field_map(dim: usize, seed: u64, delta: f64) -> Result<SmoothMap> {
    let mut rng = rng_from(seed);
    let a: Vec<Vec<f64>> = (0..dim).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let b: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let unit = field_map(dim, a.clone(), b.clone(), 1.0)?;
    let points = match dim {
        1 => 2001,
        2 => 201,
        3 => 41,
        _ => 11,
    };
    let d1 = near_identity_delta(&unit, &GridSpec::cube(dim, -1.0, 1.0, points)?)?;
    field_map(dim, a, b, delta / d1)
}

fn field_map(dim: usize, a: Vec<Vec<f64>>, b: Vec<f64>, eps: f64) -> Result<SmoothMap> {
    let support = BoxBounds::cube(dim, -1.0, 1.0)?;
    let (a2, b2) = (a.clone(), b.clone());
    let phase = move |a: &[Vec<f64>], b: &[f64], x: &[f64], i: usize| a[i].iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + b[i];
    Ok(SmoothMap::new(dim, support, move |x| {
        let (w, _) = bump_product(x);
        (0..x.len()).map(|i| x[i] + eps * w * phase(&a, &b, x, i).sin()).collect()
    })?
    .with_jacobian(move |x| {
        let (w, gw) = bump_product(x);
        let n = x.len();
        let mut j = Mat::identity(n);
        for i in 0..n {
            let ph = phase(&a2, &b2, x, i);
            let (s, c) = (ph.sin(), ph.cos());
            for k in 0..n {
                j.set(i, k, j.get(i, k) + eps * (gw[k] * s + w * c * a2[i][k]));
            }
        }
        j
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_derivative_matches_fd() {
        for &t in &[-0.9, -0.3, 0.0, 0.5, 0.95] {
            let h = 1e-6;
            let fd = (bump(t + h).0 - bump(t - h).0) / (2.0 * h);
            assert!((fd - bump(t).1).abs() < 1e-8);
        }
    }

    #[test]
    fn analytic_jacobians_match_fd() {
        let maps = [sin_cos_bump_map(0.05), bump_field_map(3, 2, 0.1).unwrap()];
        for f in maps {
            let d = f.dim();
            let x: Vec<f64> = (0..d).map(|i| 0.3 - 0.25 * i as f64).collect();
            let plain = {
                let g = f.clone();
                SmoothMap::new(d, f.support().clone(), move |x| g.eval(x).unwrap()).unwrap()
            };
            assert!(f.jacobian(&x).unwrap().max_abs_diff(&plain.jacobian(&x).unwrap()) < 1e-8);
        }
    }

    #[test]
    fn identity_outside_support() {
        let f = bump_field_map(2, 3, 0.1).unwrap();
        for x in [[1.5, 0.0], [0.2, -1.0], [-3.0, 7.0]] {
            assert_eq!(f.eval(&x).unwrap(), x.to_vec());
        }
    }

    #[test]
    fn delta_is_scaled() {
        let f = bump_field_map(2, 5, 0.08).unwrap();
        let d = near_identity_delta(&f, &GridSpec::cube(2, -1.0, 1.0, 201).unwrap()).unwrap();
        assert!((d - 0.08).abs() < 1e-12);
    }
}
