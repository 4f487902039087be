use super::mat::Mat;

/// Singular values of `a` in descending order (one-sided Jacobi).
pub fn singular_values(a: &Mat) -> Vec<f64> {
    // Work on the orientation with fewer columns.
    let mut u = if a.cols() > a.rows() { a.transpose() } else { a.clone() };
    let (m, n) = u.shape();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (up, uq) = (u.get(i, p), u.get(i, q));
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (up, uq) = (u.get(i, p), u.get(i, q));
                    u.set(i, p, c * up - s * uq);
                    u.set(i, q, s * up + c * uq);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| u.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values above `rel_tol · σ₁`.
pub fn numerical_rank(a: &Mat, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    match sv.first() {
        Some(&s1) if s1 > 0.0 => sv.iter().filter(|&&s| s > rel_tol * s1).count(),
        _ => 0,
    }
}

/// Determinant by partial-pivot LU.
pub fn determinant(a: &Mat) -> f64 {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m = a.clone();
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m.get(i, k).abs().total_cmp(&m.get(j, k).abs())).unwrap();
        if m.get(p, k) == 0.0 {
            return 0.0;
        }
        if p != k {
            for j in 0..n {
                let tmp = m.get(k, j);
                m.set(k, j, m.get(p, j));
                m.set(p, j, tmp);
            }
            det = -det;
        }
        let pivot = m.get(k, k);
        det *= pivot;
        for i in k + 1..n {
            let f = m.get(i, k) / pivot;
            for j in k..n {
                m.set(i, j, m.get(i, j) - f * m.get(k, j));
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_singular_values() {
        let a = Mat::from_vec(3, 2, vec![3.0, 0.0, 0.0, -4.0, 0.0, 0.0]).unwrap();
        let sv = singular_values(&a);
        assert!((sv[0] - 4.0).abs() < 1e-14 && (sv[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rank_of_outer_product() {
        let a = Mat::from_fn(4, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 0.5));
        assert_eq!(numerical_rank(&a, 1e-8), 1);
        assert_eq!(numerical_rank(&Mat::identity(3), 1e-8), 3);
    }

    #[test]
    fn singular_values_match_gram_eigenvalues() {
        // For a 2-column matrix the squared singular values are the eigenvalues of AᵀA.
        let a = Mat::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let g = a.transpose().matmul(&a).unwrap();
        let (p, q, r) = (g.get(0, 0), g.get(0, 1), g.get(1, 1));
        let mean = 0.5 * (p + r);
        let disc = (0.25 * (p - r).powi(2) + q * q).sqrt();
        let sv = singular_values(&a);
        assert!((sv[0] - (mean + disc).sqrt()).abs() < 1e-12);
        assert!((sv[1] - (mean - disc).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn determinant_by_hand() {
        let a = Mat::from_vec(3, 3, vec![2.0, 0.0, 1.0, 1.0, 3.0, 2.0, 1.0, 1.0, 2.0]).unwrap();
        assert!((determinant(&a) - 6.0).abs() < 1e-12);
    }
}
