//! Dense tensors, label maps and their on-disk formats.
//!
//! Everything that crosses the file boundary goes through this module:
//! feature maps and label maps as BTSR tensors, images as binary netpbm.

mod btsr;
mod netpbm;

pub use btsr::{read_tensor, read_tensor_from, write_tensor, write_tensor_to, BTSR_MAGIC, BTSR_VERSION};
pub use netpbm::{read_image, read_image_from, write_image, write_image_to};

use std::collections::HashMap;
use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown dtype code {0}")]
    DtypeUnknown(u32),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("non-finite float at element {index}")]
    NonFiniteFloat { index: usize },
    #[error("zero-sized dimension in shape {height}x{width}x{channels}")]
    ZeroDimension {
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("{0} trailing bytes after tensor payload")]
    TrailingBytes(usize),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image header: {0}")]
    CorruptHeader(String),
    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    TruncatedPixelData { expected: usize, found: usize },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(usize),
    #[error("unexpected dtype {found:?}, expected {expected:?}")]
    WrongDtype { found: DType, expected: DType },
    #[error("shape mismatch: data length {len} does not match {height}x{width}x{channels}")]
    ShapeMismatch {
        len: usize,
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("{path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = TensorIoError> = std::result::Result<T, E>;

/// Element type of a [`Tensor3`]. The discriminant is the on-disk code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Float32 = 1,
    Uint8 = 2,
    Uint32 = 3,
}

impl DType {
    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(DType::Float32),
            2 => Ok(DType::Uint8),
            3 => Ok(DType::Uint32),
            other => Err(TensorIoError::DtypeUnknown(other)),
        }
    }

    pub fn size_of(self) -> usize {
        match self {
            DType::Float32 | DType::Uint32 => 4,
            DType::Uint8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    Float32(Vec<f32>),
    Uint8(Vec<u8>),
    Uint32(Vec<u32>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::Float32(v) => v.len(),
            TensorData::Uint8(v) => v.len(),
            TensorData::Uint32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::Float32(_) => DType::Float32,
            TensorData::Uint8(_) => DType::Uint8,
            TensorData::Uint32(_) => DType::Uint32,
        }
    }
}

/// Dense `height x width x channels` array stored row-major with channels
/// innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: TensorData,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, data: TensorData) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(TensorIoError::ZeroDimension {
                height,
                width,
                channels,
            });
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels));
        if expected != Some(data.len()) {
            return Err(TensorIoError::ShapeMismatch {
                len: data.len(),
                height,
                width,
                channels,
            });
        }
        if let TensorData::Float32(v) = &data {
            if let Some(index) = v.iter().position(|x| !x.is_finite()) {
                return Err(TensorIoError::NonFiniteFloat { index });
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_f32(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(height, width, channels, TensorData::Float32(data))
    }

    pub fn from_u8(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(height, width, channels, TensorData::Uint8(data))
    }

    pub fn from_u32(height: usize, width: usize, channels: usize, data: Vec<u32>) -> Result<Self> {
        Self::new(height, width, channels, TensorData::Uint32(data))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn as_f32(&self) -> Result<&[f32]> {
        match &self.data {
            TensorData::Float32(v) => Ok(v),
            other => Err(TensorIoError::WrongDtype {
                found: other.dtype(),
                expected: DType::Float32,
            }),
        }
    }

    pub fn as_u8(&self) -> Result<&[u8]> {
        match &self.data {
            TensorData::Uint8(v) => Ok(v),
            other => Err(TensorIoError::WrongDtype {
                found: other.dtype(),
                expected: DType::Uint8,
            }),
        }
    }

    pub fn as_u32(&self) -> Result<&[u32]> {
        match &self.data {
            TensorData::Uint32(v) => Ok(v),
            other => Err(TensorIoError::WrongDtype {
                found: other.dtype(),
                expected: DType::Uint32,
            }),
        }
    }

    /// Channel vector of the element at `(row, col)`; float tensors only.
    pub fn f32_at(&self, row: usize, col: usize) -> Result<&[f32]> {
        let start = (row * self.width + col) * self.channels;
        Ok(&self.as_f32()?[start..start + self.channels])
    }

    /// Sub-rectangle `[row0, row0+rows) x [col0, col0+cols)` with all channels.
    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<Self> {
        assert!(row0 + rows <= self.height && col0 + cols <= self.width, "crop out of bounds");
        fn take<T: Copy>(src: &[T], t: &Tensor3, row0: usize, col0: usize, rows: usize, cols: usize) -> Vec<T> {
            let mut out = Vec::with_capacity(rows * cols * t.channels);
            for r in row0..row0 + rows {
                let start = (r * t.width + col0) * t.channels;
                out.extend_from_slice(&src[start..start + cols * t.channels]);
            }
            out
        }
        let data = match &self.data {
            TensorData::Float32(v) => TensorData::Float32(take(v, self, row0, col0, rows, cols)),
            TensorData::Uint8(v) => TensorData::Uint8(take(v, self, row0, col0, rows, cols)),
            TensorData::Uint32(v) => TensorData::Uint32(take(v, self, row0, col0, rows, cols)),
        };
        Self::new(rows, cols, self.channels, data)
    }
}

/// Total partition of an image grid into integer-labelled segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(TensorIoError::ZeroDimension {
                height,
                width,
                channels: 1,
            });
        }
        if labels.len() != height * width {
            return Err(TensorIoError::ShapeMismatch {
                len: labels.len(),
                height,
                width,
                channels: 1,
            });
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn constant(height: usize, width: usize, label: u32) -> Self {
        Self::new(height, width, vec![label; height * width]).expect("nonzero dims")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u32> {
        self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    /// Number of distinct labels.
    pub fn segment_count(&self) -> usize {
        let mut seen: Vec<u32> = self.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// `true` when labels are exactly `0..L` with every value present.
    pub fn is_contiguous(&self) -> bool {
        let max = match self.labels.iter().max() {
            Some(&m) => m as usize,
            None => return true,
        };
        let mut present = vec![false; max + 1];
        for &l in &self.labels {
            present[l as usize] = true;
        }
        present.into_iter().all(|p| p)
    }

    pub fn to_tensor(&self) -> Tensor3 {
        Tensor3::from_u32(self.height, self.width, 1, self.labels.clone()).expect("valid label map")
    }

    pub fn from_tensor(t: &Tensor3) -> Result<Self> {
        if t.channels() != 1 {
            return Err(TensorIoError::UnsupportedChannels(t.channels()));
        }
        let labels = match t.data() {
            TensorData::Uint32(v) => v.clone(),
            TensorData::Uint8(v) => v.iter().map(|&x| x as u32).collect(),
            TensorData::Float32(_) => {
                return Err(TensorIoError::WrongDtype {
                    found: DType::Float32,
                    expected: DType::Uint32,
                })
            }
        };
        Self::new(t.height(), t.width(), labels)
    }
}

/// Renumbers labels to `0..L` in order of first occurrence in a row-major scan.
pub fn relabel(map: &LabelMap) -> LabelMap {
    let mut remap: HashMap<u32, u32> = HashMap::new();
    let labels = map
        .labels
        .iter()
        .map(|&l| {
            let next = remap.len() as u32;
            *remap.entry(l).or_insert(next)
        })
        .collect();
    LabelMap {
        height: map.height,
        width: map.width,
        labels,
    }
}
