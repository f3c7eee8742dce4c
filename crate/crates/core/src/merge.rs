//! Fusing superpixels whose binary codes agree.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::egs::DisjointSet;
use crate::itq::BitCode;
use crate::superpixel::SuperpixelSet;
use crate::tensor_io::{relabel, LabelMap, Tensor3};

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("codes of different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{codes} codes for {superpixels} superpixels")]
    CodeCountMismatch { codes: usize, superpixels: usize },
    #[error("max_hamming {max_hamming} exceeds the {bits}-bit code length")]
    ThresholdTooLarge { max_hamming: u32, bits: usize },
}

pub fn hamming(a: BitCode, b: BitCode) -> Result<u32, MergeError> {
    if a.len() != b.len() {
        return Err(MergeError::LengthMismatch(a.len(), b.len()));
    }
    Ok((a.value() ^ b.value()).count_ones())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeScope {
    /// Only superpixels sharing a pixel border may merge.
    #[default]
    Adjacent,
    /// Any two superpixels within the threshold merge, touching or not.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MergePolicy {
    pub max_hamming: u32,
    pub scope: MergeScope,
}

/// Union of every candidate pair within `max_hamming`, closed transitively.
/// Output labels are contiguous in first-occurrence order.
pub fn merge_superpixels(sp: &SuperpixelSet, codes: &[BitCode], policy: &MergePolicy) -> Result<LabelMap, MergeError> {
    if codes.len() != sp.count {
        return Err(MergeError::CodeCountMismatch {
            codes: codes.len(),
            superpixels: sp.count,
        });
    }
    if let Some(first) = codes.first() {
        if policy.max_hamming as usize > first.len() {
            return Err(MergeError::ThresholdTooLarge {
                max_hamming: policy.max_hamming,
                bits: first.len(),
            });
        }
    }
    let mut ds = DisjointSet::new(sp.count);
    match policy.scope {
        MergeScope::Adjacent => {
            for &(a, b) in &sp.adjacency {
                if hamming(codes[a as usize], codes[b as usize])? <= policy.max_hamming {
                    ds.union(a as usize, b as usize, 0.0);
                }
            }
        }
        MergeScope::Global if policy.max_hamming == 0 => {
            let mut first_with: HashMap<BitCode, usize> = HashMap::new();
            for (i, &c) in codes.iter().enumerate() {
                if let Some(&j) = first_with.get(&c) {
                    ds.union(i, j, 0.0);
                } else {
                    first_with.insert(c, i);
                }
            }
        }
        MergeScope::Global => {
            for i in 0..codes.len() {
                for j in i + 1..codes.len() {
                    if hamming(codes[i], codes[j])? <= policy.max_hamming {
                        ds.union(i, j, 0.0);
                    }
                }
            }
        }
    }
    let labels = sp
        .labels
        .labels()
        .iter()
        .map(|&l| ds.find(l as usize) as u32)
        .collect();
    let merged = LabelMap::new(sp.labels.height(), sp.labels.width(), labels).expect("same shape");
    Ok(relabel(&merged))
}

/// Deterministic pseudo-random color per label for qualitative figures.
pub fn colorize_labels(labels: &LabelMap) -> Tensor3 {
    let color = |l: u32| {
        let mut z = (l as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        [(z & 0xFF) as u8, ((z >> 8) & 0xFF) as u8, ((z >> 16) & 0xFF) as u8]
    };
    let mut px = Vec::with_capacity(labels.len() * 3);
    for &l in labels.labels() {
        px.extend_from_slice(&color(l));
    }
    Tensor3::from_u8(labels.height(), labels.width(), 3, px).expect("valid image")
}
