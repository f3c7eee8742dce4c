use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg;

/// Orthogonal `R` maximizing `tr(R^T m)`.
pub fn solve_procrustes(m: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::procrustes(m)
}

/// Seeded Haar-like random rotation: Gaussian matrix, QR, diagonal of R
/// forced positive so the factor is unique.
pub fn random_rotation(bits: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = DMatrix::<f64>::zeros(bits, bits);
    for i in 0..bits {
        for j in 0..bits {
            g[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..bits {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[inline]
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `||sign(V R) - V R||_F^2`.
pub fn rotation_loss(v: &DMatrix<f64>, rotation: &DMatrix<f64>) -> f64 {
    let z = v * rotation;
    z.iter().map(|&x| (sign(x) - x).powi(2)).sum()
}

#[derive(Debug, Clone)]
pub struct ItqFit {
    pub rotation: DMatrix<f64>,
    /// Quantization loss at the initial rotation followed by the loss after
    /// each iteration; `iters + 1` entries.
    pub loss_history: Vec<f64>,
}

impl ItqFit {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("history is never empty")
    }
}

/// Alternating minimization of the quantization loss over binary codes and
/// an orthogonal rotation of the projected data `v` (`n x b`).
pub fn fit_itq(v: &DMatrix<f64>, iters: usize, seed: u64) -> ItqFit {
    let bits = v.ncols();
    assert!(bits >= 1, "need at least one projected dimension");
    let mut rotation = random_rotation(bits, seed);
    let mut loss_history = Vec::with_capacity(iters + 1);
    loss_history.push(rotation_loss(v, &rotation));
    for _ in 0..iters {
        let codes = (v * &rotation).map(sign);
        rotation = solve_procrustes(&v.tr_mul(&codes));
        loss_history.push(rotation_loss(v, &rotation));
    }
    ItqFit {
        rotation,
        loss_history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthogonality_error;

    #[test]
    fn zero_iterations_returns_initialization() {
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.1, -1.0]);
        let fit = fit_itq(&v, 0, 42);
        assert_eq!(fit.rotation, random_rotation(2, 42));
        assert_eq!(fit.loss_history.len(), 1);
    }

    #[test]
    fn one_bit_rotation_is_a_sign() {
        let v = DMatrix::from_column_slice(5, 1, &[0.3, -1.2, 2.0, 0.9, -0.1]);
        let fit = fit_itq(&v, 1, 7);
        assert!((fit.rotation[(0, 0)].abs() - 1.0).abs() < 1e-15);
        let plus = rotation_loss(&v, &DMatrix::from_element(1, 1, 1.0));
        let minus = rotation_loss(&v, &DMatrix::from_element(1, 1, -1.0));
        assert!((fit.final_loss() - plus.min(minus)).abs() < 1e-12);
    }

    #[test]
    fn random_rotation_is_orthogonal_and_seeded() {
        let a = random_rotation(8, 1);
        assert!(orthogonality_error(&a) < 1e-12);
        assert_eq!(a, random_rotation(8, 1));
        assert_ne!(a, random_rotation(8, 2));
    }

    #[test]
    fn sign_of_zero_is_positive() {
        assert_eq!(sign(0.0), 1.0);
        assert_eq!(sign(-0.0), 1.0);
        assert_eq!(sign(-1e-300), -1.0);
    }
}
