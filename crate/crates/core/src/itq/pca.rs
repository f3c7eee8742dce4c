use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ItqError;
use crate::linalg::{orthonormalize_columns, symmetric_eigen};

/// Which eigen-problem the PCA stage solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PcaSolver {
    /// `Gram`/`Covariance` by the smaller side, `Subspace` once that side
    /// exceeds [`DENSE_LIMIT`].
    #[default]
    Auto,
    /// Dense Jacobi on the `d x d` covariance.
    Covariance,
    /// Dense Jacobi on the `n x n` centered Gram matrix, mapped back to
    /// feature space.
    Gram,
    /// Block power iteration on the implicit covariance with a Rayleigh-Ritz
    /// finish; never forms a square matrix larger than `bits + 8`.
    Subspace,
}

/// Largest dense eigenproblem `Auto` hands to Jacobi.
pub const DENSE_LIMIT: usize = 256;

/// Eigenvalues at or below this fraction of the data's second moment count
/// as zero.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// `d x b`, orthonormal columns in descending eigenvalue order.
    pub projection: DMatrix<f64>,
    /// Top-`b` covariance eigenvalues (unbiased, divided by `n - 1`).
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    /// Sum of the retained eigenvalues.
    pub fn captured_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

pub fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    xc
}

pub fn fit_pca(x: &DMatrix<f64>, bits: usize) -> Result<Pca, ItqError> {
    fit_pca_with(x, bits, PcaSolver::Auto)
}

pub fn fit_pca_with(x: &DMatrix<f64>, bits: usize, solver: PcaSolver) -> Result<Pca, ItqError> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(ItqError::BadShape(format!("need at least 2 samples, got {n}")));
    }
    if bits == 0 || bits > (n - 1).min(d) {
        return Err(ItqError::BadShape(format!(
            "cannot keep {bits} components from {n} samples of dimension {d}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ItqError::NonFinite);
    }
    let mean = column_means(x);
    let xc = center(x, &mean);
    let solver = match solver {
        PcaSolver::Auto if n.min(d) > DENSE_LIMIT => PcaSolver::Subspace,
        PcaSolver::Auto if n < d => PcaSolver::Gram,
        PcaSolver::Auto => PcaSolver::Covariance,
        s => s,
    };
    let (mut projection, eigenvalues) = match solver {
        PcaSolver::Covariance => covariance_route(&xc, bits),
        PcaSolver::Gram => gram_route(&xc, bits),
        PcaSolver::Subspace => subspace_route(&xc, bits),
        PcaSolver::Auto => unreachable!(),
    };

    let second_moment: f64 = x.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
    let threshold = RANK_TOLERANCE * second_moment.max(f64::MIN_POSITIVE);
    let available = eigenvalues.iter().filter(|&&l| l > threshold).count();
    if available < bits {
        return Err(ItqError::RankDeficient {
            requested: bits,
            available,
        });
    }

    if !orthonormalize_columns(&mut projection) {
        return Err(ItqError::RankDeficient {
            requested: bits,
            available,
        });
    }
    apply_sign_convention(&mut projection);
    Ok(Pca {
        mean,
        projection,
        eigenvalues,
    })
}

/// Flips each column so its largest-magnitude entry (first on ties) is positive.
pub fn apply_sign_convention(p: &mut DMatrix<f64>) {
    for mut col in p.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn covariance_route(xc: &DMatrix<f64>, bits: usize) -> (DMatrix<f64>, Vec<f64>) {
    let n = xc.nrows();
    let cov = xc.tr_mul(xc) / (n - 1) as f64;
    let eig = symmetric_eigen(&cov);
    let p = eig.vectors.columns(0, bits).clone_owned();
    (p, eig.values[..bits].to_vec())
}

fn gram_route(xc: &DMatrix<f64>, bits: usize) -> (DMatrix<f64>, Vec<f64>) {
    let n = xc.nrows();
    let denom = (n - 1) as f64;
    let gram = (xc * xc.transpose()) / denom;
    let eig = symmetric_eigen(&gram);
    let mut p = DMatrix::zeros(xc.ncols(), bits);
    for j in 0..bits {
        let lambda = eig.values[j].max(0.0);
        let v = xc.tr_mul(&eig.vectors.column(j).clone_owned());
        let norm = (denom * lambda).sqrt();
        if norm > 0.0 {
            p.set_column(j, &(v / norm));
        }
    }
    (p, eig.values[..bits].to_vec())
}

const SUBSPACE_OVERSAMPLE: usize = 8;
const SUBSPACE_MAX_ITERS: usize = 500;
const SUBSPACE_SEED: u64 = 0x5eed_9ca0;

fn subspace_route(xc: &DMatrix<f64>, bits: usize) -> (DMatrix<f64>, Vec<f64>) {
    let (n, d) = xc.shape();
    let denom = (n - 1) as f64;
    let width = (bits + SUBSPACE_OVERSAMPLE).min(d).min(n - 1).max(bits);
    let mut rng = ChaCha8Rng::seed_from_u64(SUBSPACE_SEED);
    let start = DMatrix::from_fn(d, width, |_, _| StandardNormal.sample(&mut rng));
    let mut q = start.qr().q();

    let mut previous = vec![f64::INFINITY; bits];
    for _ in 0..SUBSPACE_MAX_ITERS {
        let y = xc.tr_mul(&(xc * &q)) / denom;
        let ritz = symmetric_eigen(&q.tr_mul(&y));
        q = y.qr().q();
        let top = ritz.values[0].abs().max(f64::MIN_POSITIVE);
        let settled = ritz.values[..bits]
            .iter()
            .zip(&previous)
            .all(|(a, b)| (a - b).abs() <= 1e-14 * top);
        previous.copy_from_slice(&ritz.values[..bits]);
        if settled {
            break;
        }
    }
    let z = xc * &q;
    let ritz = symmetric_eigen(&(z.tr_mul(&z) / denom));
    let p = &q * ritz.vectors.columns(0, bits);
    (p, ritz.values[..bits].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthogonality_error;

    fn anisotropic_cloud() -> DMatrix<f64> {
        // +-10 along x and +-1 along y on a 4-point pattern repeated with jitter
        let mut rows = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let gx: f64 = StandardNormal.sample(&mut rng);
            let gy: f64 = StandardNormal.sample(&mut rng);
            rows.push(10.0 * gx);
            rows.push(gy);
        }
        DMatrix::from_row_slice(500, 2, &rows)
    }

    #[test]
    fn anisotropic_picks_x_axis_with_positive_sign() {
        let pca = fit_pca(&anisotropic_cloud(), 1).unwrap();
        let p = pca.projection.column(0);
        assert!(p[0].abs() >= 0.999, "projection {p:?}");
        assert!(p[0] > 0.0);
    }

    #[test]
    fn identical_rows_are_rank_deficient() {
        let x = DMatrix::from_fn(6, 3, |_, j| 0.1 * (j as f64 + 1.0));
        for solver in [PcaSolver::Covariance, PcaSolver::Gram, PcaSolver::Subspace] {
            assert!(matches!(
                fit_pca_with(&x, 1, solver),
                Err(ItqError::RankDeficient { requested: 1, available: 0 })
            ));
        }
    }

    #[test]
    fn bad_shapes() {
        let x = DMatrix::from_element(1, 3, 1.0);
        assert!(matches!(fit_pca(&x, 1), Err(ItqError::BadShape(_))));
        let x = DMatrix::from_fn(3, 4, |i, j| (i * j) as f64);
        assert!(matches!(fit_pca(&x, 3), Err(ItqError::BadShape(_))));
        assert!(matches!(fit_pca(&x, 0), Err(ItqError::BadShape(_))));
    }

    #[test]
    fn solvers_agree_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(40, 12, |_, j| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * (12 - j) as f64
        });
        let reference = fit_pca_with(&x, 4, PcaSolver::Covariance).unwrap();
        for solver in [PcaSolver::Gram, PcaSolver::Subspace] {
            let other = fit_pca_with(&x, 4, solver).unwrap();
            assert!((&other.projection - &reference.projection).amax() < 1e-6, "{solver:?}");
            assert!(orthogonality_error(&other.projection) < 1e-10);
        }
    }
}
