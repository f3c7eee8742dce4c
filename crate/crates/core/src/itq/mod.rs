//! Iterative-quantization hashing of feature vectors into short binary codes.
//!
//! Training centers the data, keeps the top-`b` principal directions and then
//! learns an orthogonal rotation of that subspace that minimizes the
//! quantization loss `||sign(V R) - V R||_F^2`. Encoding is a single affine
//! projection followed by a sign test, with `sign(0) = +1`.

mod model_io;
mod pca;
mod rotation;

pub use model_io::{read_model, read_model_from, write_model, write_model_to, BHSH_MAGIC, BHSH_VERSION};
pub use pca::{apply_sign_convention, center, column_means, fit_pca, fit_pca_with, Pca, PcaSolver, DENSE_LIMIT};
pub use rotation::{fit_itq, random_rotation, rotation_loss, sign, solve_procrustes, ItqFit};

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor_io::TensorIoError;

/// Longest code a [`BitCode`] can hold.
pub const MAX_BITS: usize = 64;
pub const DEFAULT_ITQ_ITERS: usize = 50;

#[derive(Debug, Error)]
pub enum ItqError {
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("rank deficient: requested {requested} components but only {available} have nonzero variance")]
    RankDeficient { requested: usize, available: usize },
    #[error("dimension mismatch: model expects {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("{0} bits requested, at most {MAX_BITS} are supported")]
    TooManyBits(usize),
    #[error("training data contains non-finite values")]
    NonFinite,
    #[error("bad model magic {0:?}")]
    BadModelMagic([u8; 4]),
    #[error("unsupported model version {0}")]
    UnsupportedModelVersion(u32),
    #[error("malformed model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
}

/// A `len`-bit binary code; bit `i` lives at `1 << i` of the packed word.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitCode {
    word: u64,
    len: u8,
}

impl BitCode {
    pub fn new(word: u64, len: usize) -> Self {
        assert!(len <= MAX_BITS, "code length {len} exceeds {MAX_BITS}");
        let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        Self {
            word: word & mask,
            len: len as u8,
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let word = bits
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i));
        Self::new(word, bits.len())
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Packed value, `sum(bit_i * 2^i)`.
    pub fn value(&self) -> u64 {
        self.word
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len(), "bit {i} out of range for {}-bit code", self.len);
        (self.word >> i) & 1 == 1
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.bit(i))
    }
}

impl fmt::Debug for BitCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitCode(")?;
        for i in (0..self.len()).rev() {
            write!(f, "{}", self.bit(i) as u8)?;
        }
        write!(f, ")")
    }
}

/// Optional per-vector preprocessing applied before centering, both while
/// training and while encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureNorm {
    #[default]
    None,
    L2,
}

impl FeatureNorm {
    pub fn apply(self, x: &mut [f64]) {
        if let FeatureNorm::L2 = self {
            let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                x.iter_mut().for_each(|v| *v /= n);
            }
        }
    }
}

/// Provenance stored alongside the learned parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub rows_used: usize,
    pub rows_available: usize,
    pub row_cap: Option<usize>,
    pub seed: u64,
    pub itq_iters: usize,
    pub final_loss: f64,
    pub normalization: FeatureNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashModel {
    pub mean: DVector<f64>,
    /// `dim x bits`, orthonormal columns.
    pub projection: DMatrix<f64>,
    /// `bits x bits`, orthogonal.
    pub rotation: DMatrix<f64>,
    pub normalization: FeatureNorm,
    pub info: TrainingInfo,
}

impl HashModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn bits(&self) -> usize {
        self.rotation.ncols()
    }

    /// Rotated projection `((x - mean) P) R`.
    pub fn embed(&self, x: &[f32]) -> Result<Vec<f64>, ItqError> {
        if x.len() != self.dim() {
            return Err(ItqError::DimMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut xs: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        self.normalization.apply(&mut xs);
        for (v, m) in xs.iter_mut().zip(self.mean.iter()) {
            *v -= m;
        }
        let b = self.bits();
        let projected: Vec<f64> = (0..b)
            .map(|j| {
                self.projection
                    .column(j)
                    .iter()
                    .zip(&xs)
                    .map(|(p, v)| p * v)
                    .sum()
            })
            .collect();
        Ok((0..b)
            .map(|j| {
                self.rotation
                    .column(j)
                    .iter()
                    .zip(&projected)
                    .map(|(r, v)| r * v)
                    .sum()
            })
            .collect())
    }

    pub fn encode(&self, x: &[f32]) -> Result<BitCode, ItqError> {
        let z = self.embed(x)?;
        let word = z
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &v)| acc | (((v >= 0.0) as u64) << i));
        Ok(BitCode::new(word, z.len()))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub bits: usize,
    pub iters: usize,
    pub seed: u64,
    pub solver: PcaSolver,
    pub normalization: FeatureNorm,
}

impl TrainOptions {
    pub fn new(bits: usize) -> Self {
        Self {
            bits,
            iters: DEFAULT_ITQ_ITERS,
            seed: 0,
            solver: PcaSolver::Auto,
            normalization: FeatureNorm::None,
        }
    }
}

/// Model together with the per-iteration loss trace of its rotation.
#[derive(Debug, Clone)]
pub struct TrainedHash {
    pub model: HashModel,
    pub loss_history: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

fn normalized(x: &DMatrix<f64>, norm: FeatureNorm) -> Option<DMatrix<f64>> {
    match norm {
        FeatureNorm::None => None,
        FeatureNorm::L2 => {
            let mut y = x.clone();
            for mut row in y.row_iter_mut() {
                let n = row.norm();
                if n > 0.0 {
                    row /= n;
                }
            }
            Some(y)
        }
    }
}

/// PCA then ITQ on the `n x d` training matrix.
pub fn train_hash(x: &DMatrix<f64>, bits: usize, iters: usize, seed: u64) -> Result<HashModel, ItqError> {
    let opts = TrainOptions {
        iters,
        seed,
        ..TrainOptions::new(bits)
    };
    Ok(train_hash_with(x, &opts)?.model)
}

pub fn train_hash_with(x: &DMatrix<f64>, opts: &TrainOptions) -> Result<TrainedHash, ItqError> {
    if opts.bits > MAX_BITS {
        return Err(ItqError::TooManyBits(opts.bits));
    }
    let owned = normalized(x, opts.normalization);
    let x = owned.as_ref().unwrap_or(x);
    let pca = fit_pca_with(x, opts.bits, opts.solver)?;
    let v = center(x, &pca.mean) * &pca.projection;
    let fit = fit_itq(&v, opts.iters, opts.seed);
    let info = TrainingInfo {
        rows_used: x.nrows(),
        rows_available: x.nrows(),
        row_cap: None,
        seed: opts.seed,
        itq_iters: opts.iters,
        final_loss: fit.final_loss(),
        normalization: opts.normalization,
    };
    Ok(TrainedHash {
        model: HashModel {
            mean: pca.mean,
            projection: pca.projection,
            rotation: fit.rotation,
            normalization: opts.normalization,
            info,
        },
        loss_history: fit.loss_history,
        eigenvalues: pca.eigenvalues,
    })
}

pub fn encode(model: &HashModel, x: &[f32]) -> Result<BitCode, ItqError> {
    model.encode(x)
}

/// `||sign(V R) - V R||_F^2` of the model on the rows of `x`.
pub fn quantization_loss(model: &HashModel, x: &DMatrix<f64>) -> Result<f64, ItqError> {
    if x.ncols() != model.dim() {
        return Err(ItqError::DimMismatch {
            expected: model.dim(),
            found: x.ncols(),
        });
    }
    let owned = normalized(x, model.normalization);
    let x = owned.as_ref().unwrap_or(x);
    let v = center(x, &model.mean) * &model.projection;
    Ok(rotation_loss(&v, &model.rotation))
}
