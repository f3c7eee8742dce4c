//! Segmentation by merging superpixels that share a learned binary code.

pub mod binmap;
pub mod egs;
pub mod eval;
pub mod fixtures;
pub mod itq;
pub mod linalg;
pub mod merge;
pub mod pipeline;
pub mod superpixel;
pub mod tensor_io;

pub use binmap::{BinaryMap, CodeAssign};
pub use egs::EgsParams;
pub use eval::{best_match_iou, iou, EvalReport};
pub use itq::{BitCode, HashModel};
pub use merge::{MergePolicy, MergeScope};
pub use pipeline::{Method, PipelineConfig, PipelineError};
pub use superpixel::{SlicParams, SuperpixelSet};
pub use tensor_io::{relabel, DType, LabelMap, Tensor3, TensorIoError};
