//! SLIC superpixels and the region bookkeeping shared with merging.

mod color;
mod slic;

pub use color::{rgb_to_lab, srgb_to_lab};
pub use slic::{slic, slic_clusters, slic_with, SlicParams, DEFAULT_COMPACTNESS, DEFAULT_SLIC_ITERS};

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use thiserror::Error;

use crate::tensor_io::{relabel, LabelMap, TensorIoError};

#[derive(Debug, Error)]
pub enum SuperpixelError {
    #[error("requested {k} superpixels but the image has only {pixels} pixels")]
    KTooLarge { k: usize, pixels: usize },
    #[error("expected a 3-channel image, got {0} channels")]
    WrongChannelCount(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
}

/// Unordered label pairs `(a, b)` with `a < b`.
pub type Adjacency = BTreeSet<(u32, u32)>;

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelSet {
    /// Contiguous labels `0..count`.
    pub labels: LabelMap,
    pub count: usize,
    /// Mean `(row, col)` of each superpixel's pixels.
    pub centroids: Vec<(f64, f64)>,
    pub adjacency: Adjacency,
}

impl SuperpixelSet {
    /// Relabels `labels` contiguously and derives centroids and adjacency.
    pub fn from_labels(labels: LabelMap) -> Self {
        let labels = relabel(&labels);
        let count = labels.labels().iter().max().map_or(0, |&m| m as usize + 1);
        let mut sums = vec![(0.0f64, 0.0f64, 0usize); count];
        for y in 0..labels.height() {
            for x in 0..labels.width() {
                let s = &mut sums[labels.get(y, x) as usize];
                s.0 += y as f64;
                s.1 += x as f64;
                s.2 += 1;
            }
        }
        let centroids = sums
            .into_iter()
            .map(|(sy, sx, n)| (sy / n as f64, sx / n as f64))
            .collect();
        let adjacency = build_adjacency(&labels);
        Self {
            labels,
            count,
            centroids,
            adjacency,
        }
    }

    /// Pixel count of every superpixel.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in self.labels.labels() {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

/// Pairs of distinct labels that touch across a horizontal or vertical pixel
/// edge.
pub fn build_adjacency(labels: &LabelMap) -> Adjacency {
    let (h, w) = (labels.height(), labels.width());
    let mut adj = Adjacency::new();
    let mut add = |a: u32, b: u32| {
        if a != b {
            adj.insert((a.min(b), a.max(b)));
        }
    };
    for y in 0..h {
        for x in 0..w {
            let l = labels.get(y, x);
            if x + 1 < w {
                add(l, labels.get(y, x + 1));
            }
            if y + 1 < h {
                add(l, labels.get(y + 1, x));
            }
        }
    }
    adj
}

fn neighbors4(idx: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = (idx / w, idx % w);
    let up = (y > 0).then(|| idx - w);
    let down = (y + 1 < h).then(|| idx + w);
    let left = (x > 0).then(|| idx - 1);
    let right = (x + 1 < w).then(|| idx + 1);
    [up, left, right, down].into_iter().flatten()
}

/// 4-connected components of equal labels, numbered in scan order of their
/// first pixel. Returns the component id of every pixel.
pub fn connected_components(labels: &LabelMap) -> (Vec<usize>, usize) {
    let (h, w) = (labels.height(), labels.width());
    let raw = labels.labels();
    let mut comp = vec![usize::MAX; raw.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..raw.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(p) = stack.pop() {
            for q in neighbors4(p, h, w) {
                if comp[q] == usize::MAX && raw[q] == raw[start] {
                    comp[q] = next;
                    stack.push(q);
                }
            }
        }
        next += 1;
    }
    (comp, next)
}

/// Splits every label into its 4-connected pieces, then repeatedly absorbs
/// the smallest piece under `min_size` into the neighbor sharing the longest
/// border (ties go to the smaller component id). Output is relabeled
/// contiguously.
pub fn enforce_connectivity(set: &SuperpixelSet, min_size: usize) -> SuperpixelSet {
    let labels = &set.labels;
    let (h, w) = (labels.height(), labels.width());
    let (mut comp, n) = connected_components(labels);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (p, &c) in comp.iter().enumerate() {
        members[c].push(p);
    }
    let mut alive = vec![true; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|c| Reverse((members[c].len(), c))).collect();

    while let Some(Reverse((size, c))) = heap.pop() {
        if !alive[c] || members[c].len() != size {
            continue;
        }
        if size >= min_size {
            break;
        }
        let mut border: HashMap<usize, usize> = HashMap::new();
        for &p in &members[c] {
            for q in neighbors4(p, h, w) {
                if comp[q] != c {
                    *border.entry(comp[q]).or_default() += 1;
                }
            }
        }
        let Some((&target, _)) = border
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        else {
            // the whole image is one component
            continue;
        };
        let moved = std::mem::take(&mut members[c]);
        for &p in &moved {
            comp[p] = target;
        }
        members[target].extend(moved);
        alive[c] = false;
        heap.push(Reverse((members[target].len(), target)));
    }

    let out = LabelMap::new(h, w, comp.into_iter().map(|c| c as u32).collect()).expect("same shape");
    SuperpixelSet::from_labels(out)
}
