use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lo_1, hi_1] × ⋯ × [lo_d, hi_d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Argument("box bounds need equal, nonzero lengths".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !a.is_finite() || !b.is_finite() || a > b) {
            return Err(Error::Argument("box bounds must be finite with lo <= hi".into()));
        }
        Ok(BoxBounds { lo, hi })
    }

    /// `[lo, hi]^d`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &BoxBounds) -> BoxBounds {
        BoxBounds {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }
}

/// Tensor grid with `points` equally spaced nodes per axis, endpoints included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: BoxBounds,
    pub points: usize,
}

impl GridSpec {
    pub fn new(bounds: BoxBounds, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Argument(format!("grid needs at least 2 points per axis, got {points}")));
        }
        Ok(GridSpec { bounds, points })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64, points: usize) -> Result<Self> {
        Self::new(BoxBounds::cube(dim, lo, hi)?, points)
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn node(&self, axis: usize, k: usize) -> f64 {
        let (a, b) = (self.bounds.lo[axis], self.bounds.hi[axis]);
        if k + 1 == self.points {
            b
        } else {
            a + (b - a) * k as f64 / (self.points - 1) as f64
        }
    }

    /// The `index`-th grid point, first axis varying slowest.
    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let d = self.dim();
        let mut x = vec![0.0; d];
        for axis in (0..d).rev() {
            x[axis] = self.node(axis, index % self.points);
            index /= self.points;
        }
        x
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}
