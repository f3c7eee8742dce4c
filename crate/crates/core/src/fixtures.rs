//! Seeded synthetic scenes with known ground truth.
//!
//! A scene is a Voronoi partition of a coarse cell grid. Each region gets a
//! Gaussian feature cluster and its own color (optionally a two-color
//! stripe texture), and the partition is rendered at `scale` pixels per cell.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::superpixel::connected_components;
use crate::tensor_io::{write_image, write_tensor, LabelMap, Tensor3, TensorIoError};

/// Within-region feature standard deviation.
pub const CLUSTER_SIGMA: f64 = 0.05;
/// Minimum center separation in units of [`CLUSTER_SIGMA`].
pub const MIN_SEPARATION: f64 = 10.0;
/// Uniform integer image noise amplitude.
pub const IMAGE_NOISE: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Texture {
    /// One color per region.
    #[default]
    Flat,
    /// Two alternating colors per region in stripes of `STRIPE_WIDTH` pixels
    /// with a per-region orientation.
    Stripes,
}

pub const STRIPE_WIDTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub scale: usize,
    pub dim: usize,
    pub regions: usize,
    pub seed: u64,
    pub texture: Texture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    /// `(height*scale) x (width*scale) x 3` u8.
    pub image: Tensor3,
    /// `height x width x dim` f32.
    pub features: Tensor3,
    /// Region of every pixel.
    pub gt: LabelMap,
    /// Region of every feature cell.
    pub cell_gt: LabelMap,
    pub regions: usize,
    pub seed: u64,
}

pub fn make_scene(h: usize, w: usize, scale: usize, d: usize, regions: usize, seed: u64) -> SyntheticScene {
    make_scene_with(&SceneSpec {
        height: h,
        width: w,
        scale,
        dim: d,
        regions,
        seed,
        texture: Texture::default(),
    })
}

fn voronoi(rng: &mut ChaCha8Rng, h: usize, w: usize, regions: usize) -> Vec<u32> {
    let mut sites: Vec<(usize, usize)> = Vec::with_capacity(regions);
    while sites.len() < regions {
        let s = (rng.random_range(0..h), rng.random_range(0..w));
        if !sites.contains(&s) {
            sites.push(s);
        }
    }
    (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as i64, (i % w) as i64);
            let d2 = |&(sy, sx): &(usize, usize)| (sy as i64 - y).pow(2) + (sx as i64 - x).pow(2);
            (0..regions).min_by_key(|&r| (d2(&sites[r]), r)).unwrap() as u32
        })
        .collect()
}

/// Each region is one 4-connected piece of at least a quarter of its fair share.
fn acceptable(cells: &LabelMap, regions: usize) -> bool {
    let (_, pieces) = connected_components(cells);
    let mut sizes = vec![0usize; regions];
    for &l in cells.labels() {
        sizes[l as usize] += 1;
    }
    let min = (cells.len() / (4 * regions)).max(1);
    pieces == regions && sizes.iter().all(|&s| s >= min)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn feature_centers(rng: &mut ChaCha8Rng, regions: usize, d: usize) -> Vec<Vec<f64>> {
    let min_dist = MIN_SEPARATION * CLUSTER_SIGMA;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(regions);
    while centers.len() < regions {
        let c: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        let far = centers
            .iter()
            .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= min_dist);
        if far {
            centers.push(c);
        }
    }
    centers
}

fn color_dist(a: [i32; 3], b: [i32; 3]) -> f64 {
    ((0..3).map(|i| ((a[i] - b[i]) as f64).powi(2)).sum::<f64>()).sqrt()
}

/// Two colors per region, all pairwise far apart in RGB.
fn palette(rng: &mut ChaCha8Rng, regions: usize) -> Vec<[[i32; 3]; 2]> {
    let mut out: Vec<[[i32; 3]; 2]> = Vec::with_capacity(regions);
    let mut min_dist = 60.0;
    let mut attempts = 0;
    while out.len() < regions {
        let base = [0; 3].map(|_| rng.random_range(40..=215));
        let offset = rng.random_range(20..=30) * if rng.random_bool(0.5) { 1 } else { -1 };
        let alt = base.map(|v| (v + offset).clamp(0, 255));
        let far = out.iter().flatten().all(|&c| color_dist(c, base) >= min_dist && color_dist(c, alt) >= min_dist);
        if far {
            out.push([base, alt]);
        }
        attempts += 1;
        if attempts % 1000 == 0 {
            min_dist *= 0.8;
        }
    }
    out
}

pub fn make_scene_with(spec: &SceneSpec) -> SyntheticScene {
    let &SceneSpec {
        height: h,
        width: w,
        scale,
        dim: d,
        regions,
        seed,
        texture,
    } = spec;
    assert!(h > 0 && w > 0 && scale > 0, "scene dimensions must be positive");
    assert!(regions >= 1 && regions <= h * w, "regions must be in 1..=h*w");
    assert!(d >= regions, "feature dim must be at least the region count");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut cells = LabelMap::new(h, w, voronoi(&mut rng, h, w, regions)).expect("valid map");
    for _ in 0..1000 {
        if acceptable(&cells, regions) {
            break;
        }
        cells = LabelMap::new(h, w, voronoi(&mut rng, h, w, regions)).expect("valid map");
    }

    let centers = feature_centers(&mut rng, regions, d);
    let mut feats = Vec::with_capacity(h * w * d);
    for &r in cells.labels() {
        for &c in &centers[r as usize] {
            feats.push((c + CLUSTER_SIGMA * normal(&mut rng)) as f32);
        }
    }

    let colors = palette(&mut rng, regions);
    let orientation: Vec<u8> = (0..regions).map(|_| rng.random_range(0..4)).collect();
    let (ph, pw) = (h * scale, w * scale);
    let mut gt = Vec::with_capacity(ph * pw);
    let mut px = Vec::with_capacity(ph * pw * 3);
    for y in 0..ph {
        for x in 0..pw {
            let r = cells.get(y / scale, x / scale) as usize;
            gt.push(r as u32);
            let phase = match orientation[r] {
                0 => y,
                1 => x,
                2 => x + y,
                _ => x + ph - y,
            } / STRIPE_WIDTH
                % 2;
            let base = match texture {
                Texture::Flat => colors[r][0],
                Texture::Stripes => colors[r][phase],
            };
            for v in base {
                px.push((v + rng.random_range(-IMAGE_NOISE..=IMAGE_NOISE)).clamp(0, 255) as u8);
            }
        }
    }

    SyntheticScene {
        image: Tensor3::from_u8(ph, pw, 3, px).expect("valid image"),
        features: Tensor3::from_f32(h, w, d, feats).expect("valid features"),
        gt: LabelMap::new(ph, pw, gt).expect("valid gt"),
        cell_gt: cells,
        regions,
        seed,
    }
}

impl SyntheticScene {
    /// Writes `<id>.ppm`, `<id>.feat.btsr` and `<id>.gt.btsr` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>, id: &str) -> Result<(), TensorIoError> {
        let dir = dir.as_ref();
        write_image(&self.image, dir.join(format!("{id}.ppm")))?;
        write_tensor(&self.features, dir.join(format!("{id}.feat.btsr")))?;
        write_tensor(&self.gt.to_tensor(), dir.join(format!("{id}.gt.btsr")))
    }
}

/// `n` rows drawn round-robin from isotropic Gaussians around `centers`,
/// with the cluster index of every row.
pub fn clustered_points(n: usize, centers: &[Vec<f64>], sigma: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let d = centers.first().map_or(0, |c| c.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % centers.len()).collect();
    let mut x = DMatrix::zeros(n, d);
    for (i, &k) in labels.iter().enumerate() {
        for j in 0..d {
            x[(i, j)] = centers[k][j] + sigma * normal(&mut rng);
        }
    }
    (x, labels)
}

/// Four 2-D clusters at `(+-5, +-5)` with standard deviation 0.05.
pub fn four_clusters(n: usize, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let centers = [[5.0, 5.0], [-5.0, 5.0], [-5.0, -5.0], [5.0, -5.0]].map(|c| c.to_vec());
    clustered_points(n, &centers, 0.05, seed)
}

/// Uniform labels in `0..max_label`.
pub fn random_label_map(h: usize, w: usize, max_label: u32, seed: u64) -> LabelMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LabelMap::new(h, w, (0..h * w).map(|_| rng.random_range(0..max_label)).collect()).expect("valid map")
}

/// Uniform random RGB image.
pub fn random_image(h: usize, w: usize, seed: u64) -> Tensor3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor3::from_u8(h, w, 3, (0..h * w * 3).map(|_| rng.random()).collect()).expect("valid image")
}

/// Four flat-colored quadrants and their quadrant index map.
pub fn quadrant_image(side: usize) -> (Tensor3, LabelMap) {
    const COLORS: [[u8; 3]; 4] = [[220, 40, 40], [40, 200, 60], [50, 60, 220], [230, 220, 50]];
    let half = side / 2;
    let mut px = Vec::with_capacity(side * side * 3);
    let mut labels = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let q = (y >= half) as usize * 2 + (x >= half) as usize;
            px.extend_from_slice(&COLORS[q]);
            labels.push(q as u32);
        }
    }
    (
        Tensor3::from_u8(side, side, 3, px).expect("valid image"),
        LabelMap::new(side, side, labels).expect("valid map"),
    )
}
