//! Graph-based segmentation with an adaptive merge threshold.
//!
//! Pixels are nodes of an 8-connected grid graph weighted by the Euclidean
//! RGB distance of the smoothed image. Edges are visited in non-decreasing
//! weight order and two components merge when the edge is no heavier than
//! either component's internal difference plus `k / |C|`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor_io::{relabel, LabelMap, Tensor3, TensorIoError};

#[derive(Debug, Error)]
pub enum EgsError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("expected a 3-channel image, got {0} channels")]
    WrongChannelCount(usize),
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgsParams {
    pub sigma: f64,
    pub k: f64,
    pub min_size: usize,
}

impl Default for EgsParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            k: 100.0,
            min_size: 50,
        }
    }
}

impl EgsParams {
    pub fn validate(&self) -> Result<(), EgsError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(EgsError::InvalidParams(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(EgsError::InvalidParams(format!("k must be > 0, got {}", self.k)));
        }
        if self.min_size == 0 {
            return Err(EgsError::InvalidParams("min_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Union-find with union by rank, path compression, and per-root component
/// size and internal difference.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
    size: Vec<usize>,
    internal: Vec<f64>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    pub fn size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }

    /// Largest edge weight merged into the component so far.
    pub fn internal_diff(&mut self, x: usize) -> f64 {
        let r = self.find(x);
        self.internal[r]
    }

    /// Joins the components of `a` and `b` through an edge of weight `w`;
    /// returns the new root.
    pub fn union(&mut self, a: usize, b: usize, w: f64) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (root, child) = if self.rank[ra] >= self.rank[rb] { (ra, rb) } else { (rb, ra) };
        if self.rank[root] == self.rank[child] {
            self.rank[root] += 1;
        }
        self.parent[child] = root;
        self.size[root] += self.size[child];
        self.internal[root] = self.internal[root].max(self.internal[child]).max(w);
        root
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = ((3.0 * sigma).ceil() as usize).max(1);
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur per channel with clamp-to-edge borders.
/// `sigma == 0` returns the input unchanged.
pub fn gaussian_smooth(img: &Tensor3, sigma: f64) -> Result<Tensor3, EgsError> {
    let src = img.as_f32()?;
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(EgsError::InvalidParams(format!("sigma must be >= 0, got {sigma}")));
    }
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, kv) in kernel.iter().enumerate() {
                    let sx = clamp(x as isize + i as isize - r, w);
                    acc += kv * src[(y * w + sx) * c + ch] as f64;
                }
                tmp[(y * w + x) * c + ch] = acc;
            }
        }
    }
    let mut out = vec![0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, kv) in kernel.iter().enumerate() {
                    let sy = clamp(y as isize + i as isize - r, h);
                    acc += kv * tmp[(sy * w + x) * c + ch];
                }
                out[(y * w + x) * c + ch] = acc as f32;
            }
        }
    }
    Ok(Tensor3::from_f32(h, w, c, out)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Edge {
    w: f64,
    a: usize,
    b: usize,
}

fn grid_edges(px: &[f32], h: usize, w: usize) -> Vec<Edge> {
    let dist = |p: usize, q: usize| {
        let mut s = 0.0f64;
        for ch in 0..3 {
            let d = px[p * 3 + ch] as f64 - px[q * 3 + ch] as f64;
            s += d * d;
        }
        s.sqrt()
    };
    let mut edges = Vec::with_capacity(h * w * 4);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let mut push = |q: usize| {
                edges.push(Edge {
                    w: dist(p, q),
                    a: p.min(q),
                    b: p.max(q),
                })
            };
            if x + 1 < w {
                push(p + 1);
            }
            if y + 1 < h {
                push(p + w);
                if x + 1 < w {
                    push(p + w + 1);
                }
                if x > 0 {
                    push(p + w - 1);
                }
            }
        }
    }
    edges.sort_by(|e, f| e.w.total_cmp(&f.w).then(e.a.cmp(&f.a)).then(e.b.cmp(&f.b)));
    edges
}

pub fn egs_segment(image: &Tensor3, params: &EgsParams) -> Result<LabelMap, EgsError> {
    params.validate()?;
    if image.channels() != 3 {
        return Err(EgsError::WrongChannelCount(image.channels()));
    }
    let (h, w) = (image.height(), image.width());
    let as_float = Tensor3::from_f32(h, w, 3, image.as_u8()?.iter().map(|&v| v as f32).collect())?;
    let smooth = gaussian_smooth(&as_float, params.sigma)?;
    let edges = grid_edges(smooth.as_f32()?, h, w);

    let mut ds = DisjointSet::new(h * w);
    for e in &edges {
        let (ra, rb) = (ds.find(e.a), ds.find(e.b));
        if ra == rb {
            continue;
        }
        let ta = ds.internal[ra] + params.k / ds.size[ra] as f64;
        let tb = ds.internal[rb] + params.k / ds.size[rb] as f64;
        if e.w <= ta.min(tb) {
            ds.union(ra, rb, e.w);
        }
    }
    for e in &edges {
        let (ra, rb) = (ds.find(e.a), ds.find(e.b));
        if ra != rb && (ds.size[ra] < params.min_size || ds.size[rb] < params.min_size) {
            ds.union(ra, rb, e.w);
        }
    }
    let roots = (0..h * w).map(|p| ds.find(p) as u32).collect();
    Ok(relabel(&LabelMap::new(h, w, roots)?))
}
