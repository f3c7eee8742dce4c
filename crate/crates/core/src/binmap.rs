//! Spatial binary maps: one code per feature-map cell, aligned to the image
//! by proportional scaling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::itq::{BitCode, HashModel, ItqError};
use crate::superpixel::SuperpixelSet;
use crate::tensor_io::{Tensor3, TensorIoError};

/// Most bits a visualization can show (8 per RGB channel).
pub const MAX_VIZ_BITS: usize = 24;

#[derive(Debug, Error)]
pub enum BinMapError {
    #[error("feature map has {found} channels but the model expects {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("{0} bits cannot be visualized (at most {MAX_VIZ_BITS})")]
    TooManyBits(usize),
    #[error("malformed binary map tensor: {0}")]
    Malformed(String),
    #[error(transparent)]
    Itq(#[from] ItqError),
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    height: usize,
    width: usize,
    bits: usize,
    codes: Vec<BitCode>,
}

impl BinaryMap {
    pub fn new(height: usize, width: usize, bits: usize, codes: Vec<BitCode>) -> Result<Self, BinMapError> {
        if height == 0 || width == 0 {
            return Err(BinMapError::Malformed(format!("zero-sized map {height}x{width}")));
        }
        if codes.len() != height * width {
            return Err(BinMapError::Malformed(format!(
                "{} codes for a {height}x{width} map",
                codes.len()
            )));
        }
        if let Some(c) = codes.iter().find(|c| c.len() != bits) {
            return Err(BinMapError::Malformed(format!("{}-bit code in a {bits}-bit map", c.len())));
        }
        Ok(Self {
            height,
            width,
            bits,
            codes,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn codes(&self) -> &[BitCode] {
        &self.codes
    }

    pub fn code(&self, row: usize, col: usize) -> BitCode {
        self.codes[row * self.width + col]
    }

    /// `height x width x bits` uint8 tensor, one `{0,1}` byte per bit.
    pub fn to_tensor(&self) -> Tensor3 {
        let mut data = Vec::with_capacity(self.codes.len() * self.bits);
        for c in &self.codes {
            data.extend(c.bits().map(|b| b as u8));
        }
        Tensor3::from_u8(self.height, self.width, self.bits, data).expect("valid binary map")
    }

    pub fn from_tensor(t: &Tensor3) -> Result<Self, BinMapError> {
        let bytes = t.as_u8()?;
        let bits = t.channels();
        if bits > crate::itq::MAX_BITS {
            return Err(BinMapError::Malformed(format!("{bits} bits per cell")));
        }
        let mut codes = Vec::with_capacity(t.pixel_count());
        for cell in bytes.chunks_exact(bits) {
            if let Some(v) = cell.iter().find(|&&v| v > 1) {
                return Err(BinMapError::Malformed(format!("bit value {v}")));
            }
            let flags: Vec<bool> = cell.iter().map(|&v| v == 1).collect();
            codes.push(BitCode::from_bits(&flags));
        }
        Self::new(t.height(), t.width(), bits, codes)
    }

    /// Sub-rectangle of cells.
    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Self {
        let mut codes = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            codes.extend_from_slice(&self.codes[r * self.width + col0..r * self.width + col0 + cols]);
        }
        Self::new(rows, cols, self.bits, codes).expect("crop inside map")
    }
}

/// Encodes every cell of a `h x w x d` float feature map.
pub fn encode_feature_map(model: &HashModel, features: &Tensor3) -> Result<BinaryMap, BinMapError> {
    if features.channels() != model.dim() {
        return Err(BinMapError::DimMismatch {
            expected: model.dim(),
            found: features.channels(),
        });
    }
    let data = features.as_f32()?;
    let codes = data
        .par_chunks_exact(features.channels())
        .map(|cell| model.encode(cell))
        .collect::<Result<Vec<_>, _>>()?;
    BinaryMap::new(features.height(), features.width(), model.bits(), codes)
}

/// Cell covering pixel `(row, col)` of an `image_h x image_w` image.
#[inline]
pub fn map_pixel_to_cell(
    image_h: usize,
    image_w: usize,
    map_h: usize,
    map_w: usize,
    row: usize,
    col: usize,
) -> (usize, usize) {
    (row * map_h / image_h, col * map_w / image_w)
}

/// How a superpixel's code is derived from the cells under it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeAssign {
    /// Per-bit majority over the superpixel's pixels; ties give 1.
    #[default]
    Majority,
    /// Code of the cell under the pixel nearest the superpixel centroid.
    Center,
}

pub fn superpixel_codes(map: &BinaryMap, sp: &SuperpixelSet) -> Vec<BitCode> {
    superpixel_codes_with(map, sp, CodeAssign::Majority)
}

pub fn superpixel_codes_with(map: &BinaryMap, sp: &SuperpixelSet, mode: CodeAssign) -> Vec<BitCode> {
    let labels = &sp.labels;
    let (ih, iw) = (labels.height(), labels.width());
    let cell_of = |r: usize, c: usize| {
        let (cr, cc) = map_pixel_to_cell(ih, iw, map.height, map.width, r, c);
        map.code(cr, cc)
    };
    match mode {
        CodeAssign::Majority => {
            let b = map.bits;
            let mut ones = vec![0usize; sp.count * b];
            let mut totals = vec![0usize; sp.count];
            for r in 0..ih {
                for c in 0..iw {
                    let l = labels.get(r, c) as usize;
                    let code = cell_of(r, c);
                    totals[l] += 1;
                    for (i, bit) in code.bits().enumerate() {
                        ones[l * b + i] += bit as usize;
                    }
                }
            }
            (0..sp.count)
                .map(|l| {
                    let flags: Vec<bool> = (0..b).map(|i| 2 * ones[l * b + i] >= totals[l]).collect();
                    BitCode::from_bits(&flags)
                })
                .collect()
        }
        CodeAssign::Center => sp
            .centroids
            .iter()
            .enumerate()
            .map(|(l, &(cy, cx))| {
                // the centroid of a non-convex superpixel can fall outside it;
                // fall back to the member pixel nearest the centroid
                let (r, c) = (
                    (cy.round() as usize).min(ih - 1),
                    (cx.round() as usize).min(iw - 1),
                );
                if labels.get(r, c) as usize == l {
                    return cell_of(r, c);
                }
                let mut best = (f64::INFINITY, 0, 0);
                for rr in 0..ih {
                    for cc in 0..iw {
                        if labels.get(rr, cc) as usize == l {
                            let d = (rr as f64 - cy).powi(2) + (cc as f64 - cx).powi(2);
                            if d < best.0 {
                                best = (d, rr, cc);
                            }
                        }
                    }
                }
                cell_of(best.1, best.2)
            })
            .collect(),
    }
}

/// Grayscale for up to 8 bits (`value * floor(255 / (2^b - 1))`); RGB with
/// bits 0-7 in red, 8-15 in green and 16-23 in blue above that.
pub fn visualize_binary_map(map: &BinaryMap) -> Result<Tensor3, BinMapError> {
    let b = map.bits;
    if b > MAX_VIZ_BITS {
        return Err(BinMapError::TooManyBits(b));
    }
    if b <= 8 {
        let scale = if b == 0 { 0 } else { 255 / ((1u64 << b) - 1) };
        let px = map.codes.iter().map(|c| (c.value() * scale) as u8).collect();
        Ok(Tensor3::from_u8(map.height, map.width, 1, px)?)
    } else {
        let mut px = Vec::with_capacity(map.codes.len() * 3);
        for c in &map.codes {
            let v = c.value();
            px.extend_from_slice(&[(v & 0xFF) as u8, ((v >> 8) & 0xFF) as u8, ((v >> 16) & 0xFF) as u8]);
        }
        Ok(Tensor3::from_u8(map.height, map.width, 3, px)?)
    }
}

/// Nearest-neighbor upscaling of an image to `out_h x out_w`.
pub fn upscale_nearest(img: &Tensor3, out_h: usize, out_w: usize) -> Result<Tensor3, BinMapError> {
    let src = img.as_u8()?;
    let c = img.channels();
    let mut px = Vec::with_capacity(out_h * out_w * c);
    for r in 0..out_h {
        for col in 0..out_w {
            let (sr, sc) = map_pixel_to_cell(out_h, out_w, img.height(), img.width(), r, col);
            let i = (sr * img.width() + sc) * c;
            px.extend_from_slice(&src[i..i + c]);
        }
    }
    Ok(Tensor3::from_u8(out_h, out_w, c, px)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_io::LabelMap;

    fn code(v: u64, b: usize) -> BitCode {
        BitCode::new(v, b)
    }

    #[test]
    fn pixel_to_cell() {
        assert_eq!(map_pixel_to_cell(5, 5, 5, 5, 3, 4), (3, 4));
        for r in 0..16 {
            assert_eq!(map_pixel_to_cell(28 * 16, 10, 28, 10, r, 0).0, 0);
        }
        assert_eq!(map_pixel_to_cell(28 * 16, 10, 28, 10, 16, 0).0, 1);
    }

    #[test]
    fn superpixel_inside_one_cell() {
        let map = BinaryMap::new(2, 2, 2, vec![code(0, 2), code(1, 2), code(2, 2), code(3, 2)]).unwrap();
        // 4x4 image, label 0 = top-left 2x2 block = cell (0,0)
        let labels = LabelMap::new(4, 4, vec![0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3]).unwrap();
        let sp = SuperpixelSet::from_labels(labels);
        assert_eq!(superpixel_codes(&map, &sp), vec![code(0, 2), code(1, 2), code(2, 2), code(3, 2)]);
        assert_eq!(superpixel_codes_with(&map, &sp, CodeAssign::Center), superpixel_codes(&map, &sp));
    }

    #[test]
    fn majority_per_bit_and_tie_to_one() {
        // 1x4 map and image; one superpixel over 3 pixels of 0b01 and 1 of 0b10
        let map = BinaryMap::new(1, 4, 2, vec![code(1, 2), code(1, 2), code(1, 2), code(2, 2)]).unwrap();
        let sp = SuperpixelSet::from_labels(LabelMap::constant(1, 4, 0));
        assert_eq!(superpixel_codes(&map, &sp), vec![code(0b01, 2)]);

        let map = BinaryMap::new(1, 2, 1, vec![code(0, 1), code(1, 1)]).unwrap();
        let sp = SuperpixelSet::from_labels(LabelMap::constant(1, 2, 0));
        assert_eq!(superpixel_codes(&map, &sp), vec![code(1, 1)]);
    }

    #[test]
    fn visualization_levels() {
        let one = BinaryMap::new(1, 2, 1, vec![code(0, 1), code(1, 1)]).unwrap();
        assert_eq!(visualize_binary_map(&one).unwrap().as_u8().unwrap(), &[0, 255]);
        let eight = BinaryMap::new(1, 1, 8, vec![code(0xFF, 8)]).unwrap();
        assert_eq!(visualize_binary_map(&eight).unwrap().as_u8().unwrap(), &[255]);
        let rgb = BinaryMap::new(1, 1, 24, vec![code(0x30_20_10, 24)]).unwrap();
        let t = visualize_binary_map(&rgb).unwrap();
        assert_eq!(t.channels(), 3);
        assert_eq!(t.as_u8().unwrap(), &[0x10, 0x20, 0x30]);
        let wide = BinaryMap::new(1, 1, 25, vec![code(0, 25)]).unwrap();
        assert!(matches!(visualize_binary_map(&wide), Err(BinMapError::TooManyBits(25))));
    }

    #[test]
    fn tensor_round_trip() {
        let map = BinaryMap::new(2, 1, 3, vec![code(0b101, 3), code(0b010, 3)]).unwrap();
        let t = map.to_tensor();
        assert_eq!(t.as_u8().unwrap(), &[1, 0, 1, 0, 1, 0]);
        assert_eq!(BinaryMap::from_tensor(&t).unwrap(), map);
        let bad = Tensor3::from_u8(1, 1, 1, vec![2]).unwrap();
        assert!(BinaryMap::from_tensor(&bad).is_err());
    }

    #[test]
    fn upscale() {
        let t = Tensor3::from_u8(1, 2, 1, vec![1, 2]).unwrap();
        let u = upscale_nearest(&t, 2, 4).unwrap();
        assert_eq!(u.as_u8().unwrap(), &[1, 1, 2, 2, 1, 1, 2, 2]);
    }
}
