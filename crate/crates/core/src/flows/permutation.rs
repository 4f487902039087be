use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Mat;

/// Coordinate permutation: `apply(x)[j] = x[perm[j]]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    perm: Vec<usize>,
}

impl Permutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Argument(format!("{perm:?} is not a bijection")));
            }
        }
        Ok(Permutation { perm })
    }

    pub fn identity(d: usize) -> Self {
        Permutation { perm: (0..d).collect() }
    }

    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(rng);
        Permutation { perm }
    }

    /// Swaps coordinates `i` and `j`.
    pub fn swap(d: usize, i: usize, j: usize) -> Self {
        let mut perm: Vec<usize> = (0..d).collect();
        perm.swap(i, j);
        Permutation { perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.perm
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&p| x[p]).collect()
    }

    /// Same as [`apply`](Self::apply) for arbitrary entries.
    pub fn apply_labels<T: Copy>(&self, x: &[T]) -> Vec<T> {
        self.perm.iter().map(|&p| x[p]).collect()
    }

    pub fn apply_inverse(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; y.len()];
        for (j, &p) in self.perm.iter().enumerate() {
            x[p] = y[j];
        }
        x
    }

    pub fn apply_rows(&self, x: &Mat) -> Mat {
        if self.is_identity() {
            return x.clone();
        }
        let mut out = Mat::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let (src, dst) = (x.row(i), out.row_mut(i));
            for (j, &p) in self.perm.iter().enumerate() {
                dst[j] = src[p];
            }
        }
        out
    }

    pub fn apply_inverse_rows(&self, y: &Mat) -> Mat {
        if self.is_identity() {
            return y.clone();
        }
        let mut out = Mat::zeros(y.rows(), y.cols());
        for i in 0..y.rows() {
            let (src, dst) = (y.row(i), out.row_mut(i));
            for (j, &p) in self.perm.iter().enumerate() {
                dst[p] = src[j];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_bijection() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3]).is_err());
        assert!(Permutation::new(vec![2, 0, 1]).is_ok());
    }

    proptest! {
        #[test]
        fn inverse_undoes_apply(seed in 0u64..1000, d in 1usize..12) {
            let mut rng = crate::numkit::rng_from(seed);
            let p = Permutation::random(d, &mut rng);
            let x: Vec<f64> = (0..d).map(|i| i as f64 * 1.5 - 2.0).collect();
            prop_assert_eq!(p.apply_inverse(&p.apply(&x)), x.clone());
            prop_assert_eq!(p.apply(&p.apply_inverse(&x)), x);
        }
    }
}
