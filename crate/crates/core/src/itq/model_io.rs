//! `BHSH` container: magic, version, then four BTSR records.
//!
//! 1. mean, float32 `1 x d x 1`
//! 2. projection, float32 `d x b x 1` (row `i` holds the `b` weights of input dim `i`)
//! 3. rotation, float32 `b x b x 1`
//! 4. metadata, uint8 `1 x len x 1` holding UTF-8 JSON ([`TrainingInfo`])

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{HashModel, ItqError, TrainingInfo};
use crate::tensor_io::{read_tensor_from, write_tensor_to, Tensor3, TensorIoError};

pub const BHSH_MAGIC: [u8; 4] = *b"BHSH";
pub const BHSH_VERSION: u32 = 1;

fn matrix_tensor(m: &DMatrix<f64>) -> Tensor3 {
    let (rows, cols) = m.shape();
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            data.push(m[(i, j)] as f32);
        }
    }
    Tensor3::from_f32(rows, cols, 1, data).expect("model matrices are finite and nonempty")
}

fn tensor_matrix(t: &Tensor3, what: &str) -> Result<DMatrix<f64>, ItqError> {
    if t.channels() != 1 {
        return Err(ItqError::ModelFormat(format!("{what} record must have one channel")));
    }
    let v = t.as_f32()?;
    Ok(DMatrix::from_row_iterator(
        t.height(),
        t.width(),
        v.iter().map(|&x| x as f64),
    ))
}

pub fn write_model_to<W: Write>(model: &HashModel, w: &mut W) -> Result<(), ItqError> {
    w.write_all(&BHSH_MAGIC).map_err(TensorIoError::from)?;
    w.write_all(&BHSH_VERSION.to_le_bytes()).map_err(TensorIoError::from)?;
    let mean = DMatrix::from_row_slice(1, model.dim(), model.mean.as_slice());
    write_tensor_to(&matrix_tensor(&mean), w)?;
    write_tensor_to(&matrix_tensor(&model.projection), w)?;
    write_tensor_to(&matrix_tensor(&model.rotation), w)?;
    let mut info = model.info.clone();
    info.normalization = model.normalization;
    let json = serde_json::to_vec(&info).expect("training info serializes");
    let meta = Tensor3::from_u8(1, json.len(), 1, json).expect("json is nonempty");
    write_tensor_to(&meta, w)?;
    Ok(())
}

pub fn write_model(model: &HashModel, path: impl AsRef<Path>) -> Result<(), ItqError> {
    let path = path.as_ref();
    let wrap = |source| TensorIoError::IoFailure {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
    write_model_to(model, &mut w)?;
    w.flush().map_err(wrap)?;
    Ok(())
}

pub fn read_model_from<R: Read>(r: &mut R) -> Result<HashModel, ItqError> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)
        .map_err(|_| ItqError::ModelFormat("file shorter than the 8-byte header".into()))?;
    let magic: [u8; 4] = head[..4].try_into().unwrap();
    if magic != BHSH_MAGIC {
        return Err(ItqError::BadModelMagic(magic));
    }
    let version = u32::from_le_bytes(head[4..].try_into().unwrap());
    if version != BHSH_VERSION {
        return Err(ItqError::UnsupportedModelVersion(version));
    }
    let mean = tensor_matrix(&read_tensor_from(r)?, "mean")?;
    let projection = tensor_matrix(&read_tensor_from(r)?, "projection")?;
    let rotation = tensor_matrix(&read_tensor_from(r)?, "rotation")?;
    let meta = read_tensor_from(r)?;
    let info: TrainingInfo = serde_json::from_slice(meta.as_u8()?)
        .map_err(|e| ItqError::ModelFormat(format!("metadata: {e}")))?;

    let d = mean.ncols();
    let b = rotation.ncols();
    if mean.nrows() != 1 || projection.shape() != (d, b) || rotation.nrows() != b {
        return Err(ItqError::ModelFormat(format!(
            "inconsistent shapes: mean {:?}, projection {:?}, rotation {:?}",
            mean.shape(),
            projection.shape(),
            rotation.shape()
        )));
    }
    if b > super::MAX_BITS {
        return Err(ItqError::TooManyBits(b));
    }
    Ok(HashModel {
        mean: DVector::from_iterator(d, mean.iter().copied()),
        projection,
        rotation,
        normalization: info.normalization,
        info,
    })
}

pub fn read_model(path: impl AsRef<Path>) -> Result<HashModel, ItqError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TensorIoError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let model = read_model_from(&mut reader)?;
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest).map_err(TensorIoError::from)?;
    if !rest.is_empty() {
        return Err(ItqError::ModelFormat(format!("{} trailing bytes", rest.len())));
    }
    Ok(model)
}
