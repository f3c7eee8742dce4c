//! Small dense solvers: cyclic Jacobi for symmetric eigenproblems and
//! one-sided (Hestenes) Jacobi for the SVD.
//!
//! Matrices here are at most a few hundred rows, so the O(n^3) sweeps are
//! fine and the rotations give orthogonal factors to working precision.

use nalgebra::DMatrix;

pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Unit eigenvectors as columns, in the same order as `values`.
    pub vectors: DMatrix<f64>,
    pub sweeps: usize,
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi. Stops once the off-diagonal Frobenius norm falls below
/// `JACOBI_TOLERANCE` times the Frobenius norm of the input.
pub fn symmetric_eigen(input: &DMatrix<f64>) -> SymmetricEigen {
    let n = input.nrows();
    assert_eq!(n, input.ncols(), "symmetric_eigen needs a square matrix");
    let mut a = input.clone();
    // symmetrize against round-off in the caller's product
    for j in 0..n {
        for i in 0..j {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    let mut sweeps = 0;
    while sweeps < JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= JACOBI_TOLERANCE * scale {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep their column order
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    SymmetricEigen {
        values,
        vectors,
        sweeps,
    }
}

/// Thin SVD of a square matrix, `m = u * diag(singular) * v^T`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    /// Singular values in descending order.
    pub singular: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// One-sided Jacobi SVD for square matrices.
///
/// Columns belonging to zero singular values are completed to an orthonormal
/// basis, so `u` is always orthogonal.
pub fn svd_square(m: &DMatrix<f64>) -> Svd {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "svd_square needs a square matrix");
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for k in 0..n {
                    alpha += a[(k, p)] * a[(k, p)];
                    beta += a[(k, q)] * a[(k, q)];
                    gamma += a[(k, p)] * a[(k, q)];
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..n {
                    let x = a[(k, p)];
                    let y = a[(k, q)];
                    a[(k, p)] = c * x - s * y;
                    a[(k, q)] = s * x + c * y;
                    let x = v[(k, p)];
                    let y = v[(k, q)];
                    v[(k, p)] = c * x - s * y;
                    v[(k, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let largest = norms.iter().cloned().fold(0.0, f64::max);
    let cutoff = largest * 1e-13;

    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut vs = DMatrix::<f64>::zeros(n, n);
    let mut singular = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        vs.set_column(dst, &v.column(src));
        if norms[src] > cutoff && norms[src] > 0.0 {
            u.set_column(dst, &(a.column(src) / norms[src]));
            singular.push(norms[src]);
        } else {
            singular.push(0.0);
            missing.push(dst);
        }
    }
    if !missing.is_empty() {
        complete_basis(&mut u, &missing);
    }
    Svd { u, singular, v: vs }
}

/// Fills the listed columns of `q` with unit vectors orthogonal to all other
/// columns, drawing candidates from the standard basis.
fn complete_basis(q: &mut DMatrix<f64>, missing: &[usize]) {
    let n = q.nrows();
    let mut filled: Vec<usize> = (0..q.ncols()).filter(|c| !missing.contains(c)).collect();
    for &col in missing {
        let mut best: Option<nalgebra::DVector<f64>> = None;
        let mut best_norm = 0.0;
        for e in 0..n {
            let mut x = nalgebra::DVector::<f64>::zeros(n);
            x[e] = 1.0;
            for _ in 0..2 {
                for &f in &filled {
                    let d = q.column(f).dot(&x);
                    x -= q.column(f) * d;
                }
            }
            let norm = x.norm();
            if norm > best_norm {
                best_norm = norm;
                best = Some(x);
            }
        }
        let x = best.expect("basis completion needs a free direction");
        q.set_column(col, &(x / best_norm));
        filled.push(col);
    }
}

/// Orthogonal `R` maximizing `tr(R^T m)`: `R = U V^T` from the SVD of `m`.
pub fn procrustes(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = svd_square(m);
    &svd.u * svd.v.transpose()
}

/// Modified Gram-Schmidt on the columns, in place. Returns `false` when a
/// column is numerically dependent on the previous ones.
pub fn orthonormalize_columns(q: &mut DMatrix<f64>) -> bool {
    for j in 0..q.ncols() {
        for _ in 0..2 {
            for i in 0..j {
                let d = q.column(i).dot(&q.column(j));
                let ci = q.column(i).clone_owned();
                let mut cj = q.column_mut(j);
                cj.axpy(-d, &ci, 1.0);
            }
        }
        let norm = q.column(j).norm();
        if norm <= f64::EPSILON {
            return false;
        }
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    true
}

/// Largest absolute entry of `q^T q - I`.
pub fn orthogonality_error(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let mut worst: f64 = 0.0;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let e = symmetric_eigen(&m);
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vectors[(1, 0)].abs(), 1.0);
        assert_eq!(e.vectors[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn eigen_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, 3.0]);
        let e = symmetric_eigen(&m);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone()));
        let back = &e.vectors * d * e.vectors.transpose();
        assert!((back - &m).amax() < 1e-12);
        assert!(orthogonality_error(&e.vectors) < 1e-12);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_of_rank_deficient() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 0.0]);
        let s = svd_square(&m);
        assert!(orthogonality_error(&s.u) < 1e-12);
        assert!(orthogonality_error(&s.v) < 1e-12);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.singular.clone()));
        assert!((&s.u * d * s.v.transpose() - &m).amax() < 1e-12);
        assert!(s.singular[1] < 1e-12 && s.singular[2] < 1e-12);
    }

    #[test]
    fn procrustes_identity_and_orthogonal() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!((procrustes(&i) - &i).amax() < 1e-14);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let r = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, -1.0]);
        assert!((procrustes(&r) - &r).amax() < 1e-12);
    }

    #[test]
    fn procrustes_of_zero_is_orthogonal() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert!(orthogonality_error(&procrustes(&z)) < 1e-12);
    }
}
