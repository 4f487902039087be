use super::mat::Mat;

/// Central-difference Jacobian: entry `(i, j) = (f_i(x + h e_j) - f_i(x - h e_j)) / 2h`.
pub fn fd_jacobian<F>(f: F, x: &[f64], h: f64) -> Mat
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut xp = x.to_vec();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect());
    }
    let m = cols.first().map_or(0, Vec::len);
    Mat::from_fn(m, n, |i, j| cols[j][i])
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|j| {
            xp[j] = x[j] + h;
            let fp = f(&xp);
            xp[j] = x[j] - h;
            let fm = f(&xp);
            xp[j] = x[j];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
