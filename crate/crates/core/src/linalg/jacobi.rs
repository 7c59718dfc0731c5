//! One-sided (Hestenes) Jacobi SVD.
//!
//! Slow compared with bidiagonalisation, but it is unconditionally stable
//! and accurate on rank-deficient inputs, which is exactly where the
//! iterative solver in `nalgebra` occasionally returns factors that do not
//! reconstruct the input. [`super::svd`] falls back to this routine when
//! its post-check fails.

use nalgebra::{DMatrix, DVector};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `(U, σ, V)` of `m`, σ descending, `U` and `V` with orthonormal
/// columns (null directions of `U` are completed arbitrarily).
pub(crate) fn jacobi_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    if m.nrows() < m.ncols() {
        let (u, s, v) = jacobi_svd(&m.transpose());
        return (v, s, u);
    }
    let n = m.ncols();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let sigma_max = norms.iter().copied().fold(0.0, f64::max);
    let floor = sigma_max * f64::EPSILON * m.nrows() as f64;
    let mut u = DMatrix::<f64>::zeros(m.nrows(), n);
    let mut v_sorted = DMatrix::<f64>::zeros(n, n);
    let mut sigma = DVector::<f64>::zeros(n);
    let mut filled = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        v_sorted.set_column(k, &v.column(j));
        if norms[j] > floor {
            sigma[k] = norms[j];
            u.set_column(k, &(a.column(j) / norms[j]));
            filled.push(k);
        }
    }
    complete_orthonormal(&mut u, &filled);
    (u, sigma, v_sorted)
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// Fills the columns of `u` not listed in `filled` with unit vectors
/// orthogonal to everything already present (Gram–Schmidt on the standard
/// basis, applied twice).
fn complete_orthonormal(u: &mut DMatrix<f64>, filled: &[usize]) {
    let mut present: Vec<usize> = filled.to_vec();
    let rows = u.nrows();
    for k in 0..u.ncols() {
        if present.contains(&k) {
            continue;
        }
        let mut best = (0.0, DVector::<f64>::zeros(rows));
        for e in 0..rows {
            let mut x = DVector::<f64>::zeros(rows);
            x[e] = 1.0;
            for _ in 0..2 {
                for &j in &present {
                    let proj = u.column(j).dot(&x);
                    x -= u.column(j) * proj;
                }
            }
            let norm = x.norm();
            if norm > best.0 {
                best = (norm, x / norm);
            }
            if norm > 0.5 {
                break;
            }
        }
        u.set_column(k, &best.1);
        present.push(k);
    }
}
