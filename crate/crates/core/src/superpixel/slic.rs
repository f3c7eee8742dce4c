use rayon::prelude::*;

use super::{enforce_connectivity, SuperpixelError, SuperpixelSet};
use crate::superpixel::color::rgb_to_lab;
use crate::tensor_io::{relabel, LabelMap, Tensor3};

pub const DEFAULT_COMPACTNESS: f64 = 10.0;
pub const DEFAULT_SLIC_ITERS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SlicParams {
    /// Requested superpixel count; sets the seed grid.
    pub k: usize,
    /// Weight of spatial distance relative to Lab distance.
    pub compactness: f64,
    pub iters: usize,
    /// Minimum component size kept by connectivity enforcement; `None` means
    /// a quarter of the nominal superpixel area.
    pub min_size: Option<usize>,
}

impl SlicParams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            compactness: DEFAULT_COMPACTNESS,
            iters: DEFAULT_SLIC_ITERS,
            min_size: None,
        }
    }

    pub fn default_min_size(&self, pixels: usize) -> usize {
        (pixels / self.k.max(1)) / 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Center {
    lab: [f64; 3],
    y: f64,
    x: f64,
}

struct Grid<'a> {
    lab: &'a [f32],
    h: usize,
    w: usize,
}

impl Grid<'_> {
    #[inline]
    fn at(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.w + x) * 3;
        [self.lab[i] as f64, self.lab[i + 1] as f64, self.lab[i + 2] as f64]
    }

    fn gradient(&self, y: usize, x: usize) -> f64 {
        let sq = |a: [f64; 3], b: [f64; 3]| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>();
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(self.w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(self.h - 1));
        sq(self.at(y, xr), self.at(y, xl)) + sq(self.at(yd, x), self.at(yu, x))
    }
}

/// Seed grid: `rows x cols` cells with `rows * cols` close to `k`, each seed
/// at its cell center in pixel coordinates.
fn seed_grid(h: usize, w: usize, k: usize) -> (usize, usize) {
    let s = ((h * w) as f64 / k as f64).sqrt();
    let rows = ((h as f64 / s).round() as usize).clamp(1, h);
    let cols = ((k as f64 / rows as f64).round() as usize).clamp(1, w);
    (rows, cols)
}

fn initial_centers(grid: &Grid, k: usize) -> (Vec<Center>, f64, f64) {
    let (rows, cols) = seed_grid(grid.h, grid.w, k);
    let step_y = grid.h as f64 / rows as f64;
    let step_x = grid.w as f64 / cols as f64;
    let mut centers = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let y = (i as f64 + 0.5) * step_y - 0.5;
            let x = (j as f64 + 0.5) * step_x - 0.5;
            let py = (y.round() as usize).min(grid.h - 1);
            let px = (x.round() as usize).min(grid.w - 1);
            let here = grid.gradient(py, px);
            let mut best: Option<(f64, usize, usize)> = None;
            for ny in py.saturating_sub(1)..=(py + 1).min(grid.h - 1) {
                for nx in px.saturating_sub(1)..=(px + 1).min(grid.w - 1) {
                    let g = grid.gradient(ny, nx);
                    if g < here && best.is_none_or(|(bg, _, _)| g < bg) {
                        best = Some((g, ny, nx));
                    }
                }
            }
            let center = match best {
                Some((_, ny, nx)) => Center {
                    lab: grid.at(ny, nx),
                    y: ny as f64,
                    x: nx as f64,
                },
                None => Center {
                    lab: grid.at(py, px),
                    y,
                    x,
                },
            };
            centers.push(center);
        }
    }
    (centers, step_y, step_x)
}

#[inline]
fn distance(c: &Center, lab: [f64; 3], y: f64, x: f64, spatial_weight: f64) -> f64 {
    let dl = (0..3).map(|k| (c.lab[k] - lab[k]).powi(2)).sum::<f64>();
    let ds = (c.y - y).powi(2) + (c.x - x).powi(2);
    dl + ds * spatial_weight
}

fn assign(grid: &Grid, centers: &[Center], win_y: f64, win_x: f64, spatial_weight: f64, labels: &mut [u32]) {
    labels.par_chunks_mut(grid.w).enumerate().for_each(|(y, row)| {
        let yf = y as f64;
        let near: Vec<usize> = (0..centers.len())
            .filter(|&i| (centers[i].y - yf).abs() <= win_y)
            .collect();
        for (x, slot) in row.iter_mut().enumerate() {
            let xf = x as f64;
            let lab = grid.at(y, x);
            let mut best = f64::INFINITY;
            let mut best_idx = usize::MAX;
            for &i in &near {
                if (centers[i].x - xf).abs() > win_x {
                    continue;
                }
                let d = distance(&centers[i], lab, yf, xf, spatial_weight);
                if d < best {
                    best = d;
                    best_idx = i;
                }
            }
            if best_idx == usize::MAX {
                for (i, c) in centers.iter().enumerate() {
                    let d = distance(c, lab, yf, xf, spatial_weight);
                    if d < best {
                        best = d;
                        best_idx = i;
                    }
                }
            }
            *slot = best_idx as u32;
        }
    });
}

/// Recomputes each center as the mean Lab and position of its members and
/// drops centers that lost every pixel. Accumulates in scan order.
fn update(grid: &Grid, centers: &mut Vec<Center>, labels: &[u32]) {
    let mut sums = vec![[0.0f64; 6]; centers.len()];
    for y in 0..grid.h {
        for x in 0..grid.w {
            let l = labels[y * grid.w + x] as usize;
            let lab = grid.at(y, x);
            let s = &mut sums[l];
            s[0] += lab[0];
            s[1] += lab[1];
            s[2] += lab[2];
            s[3] += y as f64;
            s[4] += x as f64;
            s[5] += 1.0;
        }
    }
    *centers = sums
        .into_iter()
        .filter(|s| s[5] > 0.0)
        .map(|s| Center {
            lab: [s[0] / s[5], s[1] / s[5], s[2] / s[5]],
            y: s[3] / s[5],
            x: s[4] / s[5],
        })
        .collect();
}

fn validate(image: &Tensor3, params: &SlicParams) -> Result<(), SuperpixelError> {
    if image.channels() != 3 {
        return Err(SuperpixelError::WrongChannelCount(image.channels()));
    }
    let pixels = image.pixel_count();
    if params.k == 0 {
        return Err(SuperpixelError::InvalidParameter("k must be at least 1".into()));
    }
    if params.k > pixels {
        return Err(SuperpixelError::KTooLarge { k: params.k, pixels });
    }
    if !(params.compactness > 0.0 && params.compactness.is_finite()) {
        return Err(SuperpixelError::InvalidParameter(format!(
            "compactness must be positive, got {}",
            params.compactness
        )));
    }
    if params.iters == 0 {
        return Err(SuperpixelError::InvalidParameter("iters must be at least 1".into()));
    }
    Ok(())
}

/// SLIC clustering without connectivity enforcement. Labels are contiguous
/// but a label may cover several disconnected pieces.
pub fn slic_clusters(image: &Tensor3, params: &SlicParams) -> Result<LabelMap, SuperpixelError> {
    validate(image, params)?;
    let lab_img = rgb_to_lab(image)?;
    let grid = Grid {
        lab: lab_img.as_f32()?,
        h: image.height(),
        w: image.width(),
    };
    let s = (image.pixel_count() as f64 / params.k as f64).sqrt();
    let spatial_weight = (params.compactness / s).powi(2);
    let (mut centers, step_y, step_x) = initial_centers(&grid, params.k);
    let win_y = s.max(step_y);
    let win_x = s.max(step_x);
    let mut labels = vec![0u32; image.pixel_count()];
    for it in 0..params.iters {
        assign(&grid, &centers, win_y, win_x, spatial_weight, &mut labels);
        if it + 1 < params.iters {
            update(&grid, &mut centers, &labels);
        }
    }
    Ok(relabel(&LabelMap::new(grid.h, grid.w, labels)?))
}

/// SLIC superpixels followed by connectivity enforcement.
pub fn slic_with(image: &Tensor3, params: &SlicParams) -> Result<SuperpixelSet, SuperpixelError> {
    let clusters = slic_clusters(image, params)?;
    let min_size = params
        .min_size
        .unwrap_or_else(|| params.default_min_size(image.pixel_count()));
    Ok(enforce_connectivity(&SuperpixelSet::from_labels(clusters), min_size))
}

pub fn slic(image: &Tensor3, k: usize, compactness: f64, iters: usize) -> Result<SuperpixelSet, SuperpixelError> {
    slic_with(
        image,
        &SlicParams {
            k,
            compactness,
            iters,
            min_size: None,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(h: usize, w: usize, v: u8) -> Tensor3 {
        Tensor3::from_u8(h, w, 3, vec![v; h * w * 3]).unwrap()
    }

    #[test]
    fn seed_grid_counts() {
        assert_eq!(seed_grid(60, 60, 9), (3, 3));
        assert_eq!(seed_grid(64, 64, 4), (2, 2));
        assert_eq!(seed_grid(64, 64, 16), (4, 4));
        assert_eq!(seed_grid(5, 7, 35), (5, 7));
        assert_eq!(seed_grid(1, 1000, 10), (1, 10));
    }

    #[test]
    fn uniform_gray_gives_square_tiles() {
        let sp = slic(&uniform(60, 60, 128), 9, 10.0, 10).unwrap();
        assert_eq!(sp.count, 9);
        let mut sizes = vec![0usize; 9];
        for &l in sp.labels.labels() {
            sizes[l as usize] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 400), "{sizes:?}");
        // every tile is a 20x20 block aligned to the grid
        for y in 0..60 {
            for x in 0..60 {
                assert_eq!(sp.labels.get(y, x), sp.labels.get(y / 20 * 20, x / 20 * 20));
            }
        }
    }

    #[test]
    fn constant_image_centroids_stay_on_grid() {
        let sp = slic(&uniform(48, 64, 90), 12, 10.0, 10).unwrap();
        let (rows, cols) = seed_grid(48, 64, 12);
        let seeds: Vec<(f64, f64)> = (0..rows)
            .flat_map(|i| {
                (0..cols).map(move |j| {
                    (
                        (i as f64 + 0.5) * 48.0 / rows as f64 - 0.5,
                        (j as f64 + 0.5) * 64.0 / cols as f64 - 0.5,
                    )
                })
            })
            .collect();
        for &(cy, cx) in &sp.centroids {
            let nearest = seeds
                .iter()
                .map(|&(sy, sx)| ((sy - cy).powi(2) + (sx - cx).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 2.0, "centroid ({cy},{cx}) drifted {nearest}");
        }
    }

    #[test]
    fn one_superpixel_per_pixel() {
        let mut px = Vec::new();
        for i in 0..5 * 7 * 3 {
            px.push((i * 37 % 251) as u8);
        }
        let img = Tensor3::from_u8(5, 7, 3, px).unwrap();
        let sp = slic(&img, 35, 10.0, 3).unwrap();
        assert_eq!(sp.labels.len(), 35);
        assert!(sp.labels.is_contiguous());
    }

    #[test]
    fn parameter_errors() {
        let img = uniform(4, 4, 0);
        assert!(matches!(slic(&img, 17, 10.0, 1), Err(SuperpixelError::KTooLarge { k: 17, pixels: 16 })));
        assert!(matches!(slic(&img, 0, 10.0, 1), Err(SuperpixelError::InvalidParameter(_))));
        assert!(matches!(slic(&img, 2, 0.0, 1), Err(SuperpixelError::InvalidParameter(_))));
        assert!(matches!(slic(&img, 2, 10.0, 0), Err(SuperpixelError::InvalidParameter(_))));
        let gray = Tensor3::from_u8(4, 4, 1, vec![0; 16]).unwrap();
        assert!(matches!(slic(&gray, 2, 10.0, 1), Err(SuperpixelError::WrongChannelCount(1))));
    }
}
