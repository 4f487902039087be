use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::factor::{compose_factors, SingleCoordinateFactor};
use super::grid::GridSpec;
use super::map::{pointwise_deviation, SmoothMap};
use super::root::{solve_increasing, ROOT_TOL};
use crate::error::{shape, Error, Result};
use crate::numkit::Mat;

/// Working bound `min(0.2, 1/(2(d−1)))` on δ for a map of dimension `d`.
pub fn practical_threshold(dim: usize) -> f64 {
    if dim <= 1 {
        0.2
    } else {
        0.2f64.min(1.0 / (2.0 * (dim - 1) as f64))
    }
}

/// Sup over the grid of `max(‖f(x) − x‖_∞, max_ij |Df(x) − I|_ij)`.
pub fn near_identity_delta(f: &SmoothMap, grid: &GridSpec) -> Result<f64> {
    if grid.dim() != f.dim() {
        return Err(shape("grid and map dims differ"));
    }
    let mut delta: f64 = 0.0;
    for x in grid.iter() {
        let (fx, j) = f.eval_with_jacobian(&x)?;
        let (c0, c1) = pointwise_deviation(&x, &fx, &j);
        delta = delta.max(c0).max(c1);
    }
    Ok(delta)
}

/// Everything computed while evaluating `g = f ∘ ψ` at `z`, where `ψ` replaces
/// coordinate `k` by the solution of `f_k(…, s, …) = z_k`.
struct SplitPoint {
    p: Vec<f64>,
    fp: Vec<f64>,
    jf: Mat,
    g: Vec<f64>,
    jg: Mat,
}

fn split_point(f: &SmoothMap, k: usize, z: &[f64], level: usize) -> Result<SplitPoint> {
    let d = f.dim();
    let sup = f.support();
    let outside = (0..d).any(|j| j != k && (z[j] < sup.lo()[j] || z[j] > sup.hi()[j]));
    let mut p = z.to_vec();
    let mut last: Option<(f64, Vec<f64>, Mat)> = None;
    if !outside {
        let lo = sup.lo()[k].min(z[k]) - 1.0;
        let hi = sup.hi()[k].max(z[k]) + 1.0;
        let mut q = z.to_vec();
        let s = solve_increasing(
            |t| {
                q[k] = t;
                let (v, j) = f.eval_with_jacobian(&q)?;
                let out = (v[k], j.get(k, k));
                last = Some((t, v, j));
                Ok(out)
            },
            z[k],
            lo,
            hi,
            z[k],
            ROOT_TOL,
            level,
        )?;
        p[k] = s;
    }
    let (fp, jf) = match last {
        Some((t, v, j)) if t == p[k] => (v, j),
        _ => f.eval_with_jacobian(&p)?,
    };
    let dkk = jf.get(k, k);
    if !(dkk > 0.0) {
        return Err(Error::Precondition {
            level,
            delta: dkk,
            threshold: 0.0,
            reason: format!("coordinate {k} is not increasing along its axis"),
        });
    }
    // Dψ is the identity except row k = (−∂_i f_k / ∂_k f_k)_i with 1/∂_k f_k on the diagonal.
    let r: Vec<f64> = (0..d).map(|i| if i == k { 1.0 / dkk } else { -jf.get(k, i) / dkk }).collect();
    let mut jg = Mat::zeros(d, d);
    for row in 0..d {
        if row == k {
            jg.set(row, k, 1.0);
            continue;
        }
        let fk = jf.get(row, k);
        for col in 0..d {
            let v = if col == k { r[k] * fk } else { jf.get(row, col) + r[col] * fk };
            jg.set(row, col, v);
        }
    }
    let mut g = fp.clone();
    g[k] = z[k];
    Ok(SplitPoint { p, fp, jf, g, jg })
}

/// Result of splitting off one coordinate: `f = g ∘ h`.
#[derive(Clone, Debug)]
pub struct Split {
    /// Preserves coordinate `k`.
    pub g: SmoothMap,
    /// Alters only coordinate `k`: `h(x) = (…, f_k(x), …)`.
    pub h: SingleCoordinateFactor,
}

/// Writes `f = g ∘ h` where `h` alters only coordinate `k` and `g` preserves it.
pub fn split_coordinate(f: &SmoothMap, k: usize) -> Result<Split> {
    split_at_level(f, k, 0)
}

fn split_at_level(f: &SmoothMap, k: usize, level: usize) -> Result<Split> {
    let d = f.dim();
    if k >= d {
        return Err(Error::Argument(format!("coordinate {k} out of range for dim {d}")));
    }
    let (ft, fg) = (f.clone(), f.clone());
    let h = SingleCoordinateFactor::from_fallible(
        d,
        k,
        Some(f.support().clone()),
        move |x| Ok(ft.eval(x)?[k]),
        Some(Arc::new(move |x: &[f64]| {
            let (v, j) = fg.eval_with_jacobian(x)?;
            Ok((v[k], j.row(k).to_vec()))
        })),
    )?;
    let (fe, fj) = (f.clone(), f.clone());
    let g = SmoothMap::from_fallible(
        d,
        f.support().clone(),
        move |z| Ok(split_point(&fe, k, z, level)?.g),
        Some(Arc::new(move |z: &[f64]| {
            let sp = split_point(&fj, k, z, level)?;
            Ok((sp.g, sp.jg))
        })),
    )?;
    Ok(Split { g, h })
}

/// `f = g ∘ h` with `h` altering the last coordinate; both returned as maps.
pub fn split_last_coordinate(f: &SmoothMap) -> Result<(SmoothMap, SmoothMap)> {
    let s = split_coordinate(f, f.dim() - 1)?;
    Ok((s.g, s.h.to_map()?))
}

/// Measurements for one recursion level of the factorization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    /// Coordinate altered by the factor produced at this level (0-based).
    pub coord: usize,
    /// Measured δ of the map being split at this level.
    pub delta: f64,
    pub threshold: f64,
    /// Smallest `∂_k f_k` on the grid.
    pub min_slope: f64,
    /// For levels past the first: sup over the grid of `δ_g(z) − δ_f(p)/(1 − δ_f(p))`,
    /// with `p` the preimage used to evaluate `g` at `z`.
    pub amplification_excess: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub dim: usize,
    pub grid: GridSpec,
    pub root_tolerance: f64,
    pub levels: Vec<LevelReport>,
    /// Sup over the grid of `‖compose(factors)(x) − f(x)‖_∞`.
    pub reconstruction_error: f64,
}

impl FactorizationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug)]
pub struct Factorization {
    /// `factors[j]` alters coordinate `d − 1 − j`; `factors[0]` acts first.
    pub factors: Vec<SingleCoordinateFactor>,
    pub report: FactorizationReport,
}

fn level_check(level: usize, coord: usize, delta: f64, threshold: f64, min_slope: f64) -> Result<()> {
    if !(delta <= threshold) {
        return Err(Error::Precondition {
            level,
            delta,
            threshold,
            reason: "map is not close enough to the identity".into(),
        });
    }
    if !(min_slope > 0.0) {
        return Err(Error::Precondition {
            level,
            delta,
            threshold,
            reason: format!("coordinate {coord} is not increasing on the grid (min slope {min_slope:.3e})"),
        });
    }
    Ok(())
}

/// Factors a near-identity map into `d` single-coordinate transforms by
/// repeatedly splitting off the highest remaining coordinate.
///
/// The first level must satisfy the practical δ threshold; later levels must
/// stay below `1/(d−1)` and remain increasing in the coordinate being split.
pub fn decompose_near_identity(f: &SmoothMap, grid: &GridSpec) -> Result<Factorization> {
    let d = f.dim();
    if grid.dim() != d {
        return Err(shape("grid and map dims differ"));
    }
    let practical = practical_threshold(d);
    let theoretical = if d <= 1 { 1.0 } else { 1.0 / (d - 1) as f64 };
    let mut levels = Vec::with_capacity(d);

    let k0 = d - 1;
    let mut delta0: f64 = 0.0;
    let mut slope0 = f64::INFINITY;
    for x in grid.iter() {
        let (fx, j) = f.eval_with_jacobian(&x)?;
        let (c0, c1) = pointwise_deviation(&x, &fx, &j);
        delta0 = delta0.max(c0).max(c1);
        slope0 = slope0.min(j.get(k0, k0));
    }
    level_check(0, k0, delta0, practical, slope0)?;
    levels.push(LevelReport {
        level: 0,
        coord: k0,
        delta: delta0,
        threshold: practical,
        min_slope: slope0,
        amplification_excess: None,
    });

    let mut factors = Vec::with_capacity(d);
    let mut current = f.clone();
    for level in 1..d {
        let k_prev = d - level;
        let k = d - 1 - level;
        let split = split_at_level(&current, k_prev, level)?;
        let (mut delta, mut excess, mut slope) = (0.0f64, f64::NEG_INFINITY, f64::INFINITY);
        for z in grid.iter() {
            let sp = split_point(&current, k_prev, &z, level)?;
            let (c0f, c1f) = pointwise_deviation(&sp.p, &sp.fp, &sp.jf);
            let df = c0f.max(c1f);
            let (c0g, c1g) = pointwise_deviation(&z, &sp.g, &sp.jg);
            let dg = c0g.max(c1g);
            delta = delta.max(dg);
            excess = excess.max(dg - df / (1.0 - df));
            slope = slope.min(sp.jg.get(k, k));
        }
        level_check(level, k, delta, theoretical, slope)?;
        levels.push(LevelReport {
            level,
            coord: k,
            delta,
            threshold: theoretical,
            min_slope: slope,
            amplification_excess: Some(excess),
        });
        factors.push(split.h);
        current = split.g;
    }
    let last = current.clone();
    let last_g = current;
    factors.push(SingleCoordinateFactor::from_fallible(
        d,
        0,
        Some(last.support().clone()),
        move |x| Ok(last.eval(x)?[0]),
        Some(Arc::new(move |x: &[f64]| {
            let (v, j) = last_g.eval_with_jacobian(x)?;
            Ok((v[0], j.row(0).to_vec()))
        })),
    )?);

    let reconstruction_error = reconstruction_error(f, &factors, grid)?;
    Ok(Factorization {
        factors,
        report: FactorizationReport { dim: d, grid: grid.clone(), root_tolerance: ROOT_TOL, levels, reconstruction_error },
    })
}

/// Sup over the grid of `‖compose(factors)(x) − f(x)‖_∞`.
pub fn reconstruction_error(f: &SmoothMap, factors: &[SingleCoordinateFactor], grid: &GridSpec) -> Result<f64> {
    let composed = compose_factors(f.dim(), factors)?;
    let mut err: f64 = 0.0;
    for x in grid.iter() {
        let a = composed.eval(&x)?;
        let b = f.eval(&x)?;
        err = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(err, f64::max);
    }
    Ok(err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::grid::BoxBounds;
    use crate::diffeo::testmaps::{bump, bump_field_map, sin_cos_bump_map};

    fn support2() -> BoxBounds {
        BoxBounds::cube(2, -1.0, 1.0).unwrap()
    }

    #[test]
    fn identity_has_zero_delta_and_identity_factors() {
        let f = SmoothMap::identity(2, support2()).unwrap();
        let grid = GridSpec::cube(2, -1.2, 1.2, 11).unwrap();
        assert_eq!(near_identity_delta(&f, &grid).unwrap(), 0.0);
        let fac = decompose_near_identity(&f, &grid).unwrap();
        assert_eq!(fac.factors.len(), 2);
        for x in grid.iter() {
            for h in &fac.factors {
                let y = h.apply(&x).unwrap();
                assert!(y.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-12));
            }
        }
        let (g, h) = split_last_coordinate(&f).unwrap();
        assert_eq!(g.eval(&[0.3, 0.4]).unwrap(), vec![0.3, 0.4]);
        assert_eq!(h.eval(&[0.3, 0.4]).unwrap(), vec![0.3, 0.4]);
    }

    #[test]
    fn bump_perturbation_delta_is_derivative_dominated() {
        // x + 0.1 * (w(x_1) / w(0), 0) with w the standard bump; sup |w/w(0)| = 1.
        let w0 = bump(0.0).0;
        let f = SmoothMap::new(2, support2(), move |x| vec![x[0] + 0.1 * bump(x[0]).0 / w0, x[1]]).unwrap();
        let grid = GridSpec::cube(2, -1.0, 1.0, 401).unwrap();
        let delta = near_identity_delta(&f, &grid).unwrap();
        let dmax = (0..4001).map(|i| bump(-1.0 + i as f64 * 5e-4).1.abs()).fold(0.0, f64::max) / w0;
        assert!(dmax > 1.0);
        assert!((delta - 0.1 * dmax).abs() < 1e-3, "delta {delta} vs {}", 0.1 * dmax);
    }

    #[test]
    fn single_coordinate_map_splits_trivially() {
        let f = SmoothMap::new(2, support2(), |x| vec![x[0], x[1] + 0.1 * bump(x[0]).0 * bump(x[1]).0]).unwrap();
        let s = split_coordinate(&f, 1).unwrap();
        let grid = GridSpec::cube(2, -1.1, 1.1, 21).unwrap();
        for x in grid.iter() {
            assert_eq!(s.h.apply(&x).unwrap(), f.eval(&x).unwrap());
            let gx = s.g.eval(&x).unwrap();
            assert!(gx.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-12));
        }
    }

    #[test]
    fn reconstruction_of_two_dim_map() {
        let f = sin_cos_bump_map(0.05);
        let grid = GridSpec::cube(2, -1.0, 1.0, 50).unwrap();
        let fac = decompose_near_identity(&f, &grid).unwrap();
        assert_eq!(fac.factors.len(), 2);
        assert_eq!(fac.factors[0].coord(), 1);
        assert_eq!(fac.factors[1].coord(), 0);
        assert!(fac.report.reconstruction_error <= 1e-7, "{}", fac.report.reconstruction_error);
        assert!(fac.report.levels[1].amplification_excess.unwrap() <= 1e-6);
        let json = fac.report.to_json().unwrap();
        assert!(json.contains("reconstruction_error"));
    }

    #[test]
    fn g_composed_with_h_is_f() {
        let f = bump_field_map(2, 9, 0.1).unwrap();
        let s = split_coordinate(&f, 1).unwrap();
        let grid = GridSpec::cube(2, -1.0, 1.0, 25).unwrap();
        for x in grid.iter() {
            let y = s.g.eval(&s.h.apply(&x).unwrap()).unwrap();
            let fx = f.eval(&x).unwrap();
            assert!(y.iter().zip(&fx).all(|(a, b)| (a - b).abs() <= 1e-8));
        }
    }

    #[test]
    fn three_dim_factor_purity_and_monotonicity() {
        let f = bump_field_map(3, 4, 0.08).unwrap();
        let grid = GridSpec::cube(3, -1.0, 1.0, 9).unwrap();
        let fac = decompose_near_identity(&f, &grid).unwrap();
        assert_eq!(fac.factors.iter().map(|h| h.coord()).collect::<Vec<_>>(), vec![2, 1, 0]);
        for h in &fac.factors {
            assert!(h.min_monotone_slope(&grid).unwrap() > 0.0);
            for x in grid.iter() {
                let y = h.apply(&x).unwrap();
                for j in (0..3).filter(|&j| j != h.coord()) {
                    assert_eq!(y[j].to_bits(), x[j].to_bits());
                }
            }
        }
        assert!(fac.report.reconstruction_error <= 1e-10);
    }

    #[test]
    fn far_from_identity_is_rejected_with_level() {
        let f = bump_field_map(2, 1, 0.5).unwrap();
        let grid = GridSpec::cube(2, -1.0, 1.0, 30).unwrap();
        match decompose_near_identity(&f, &grid) {
            Err(Error::Precondition { level, delta, threshold, .. }) => {
                assert_eq!(level, 0);
                assert!(delta > threshold);
            }
            other => panic!("expected precondition error, got {other:?}"),
        }
    }

    #[test]
    fn thresholds() {
        assert_eq!(practical_threshold(2), 0.2);
        assert_eq!(practical_threshold(3), 0.2);
        assert_eq!(practical_threshold(4), 1.0 / 6.0);
    }
}
