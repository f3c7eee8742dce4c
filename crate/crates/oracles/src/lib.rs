//! Direct, deliberately naive reference implementations used to cross-check
//! the production algorithms. Nothing here depends on `binseg-core`.

use std::collections::{BTreeSet, HashMap, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen, SVD};

/// Eigenvalues in descending order and the matching unit eigenvectors (as
/// columns) of a symmetric matrix, from nalgebra's QR-based solver.
pub fn dense_eig(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), a.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Top-`b` principal directions of the rows of `x` by eigendecomposition of
/// the sample covariance, with each column's largest entry made positive.
pub fn pca_directions(x: &DMatrix<f64>, b: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    let cov = c.transpose() * &c / (n - 1.0);
    let (values, vectors) = dense_eig(&cov);
    let mut p = vectors.columns(0, b).into_owned();
    for mut col in p.column_iter_mut() {
        let big = col.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
        if big < 0.0 {
            col.neg_mut();
        }
    }
    (values[..b].to_vec(), p)
}

/// Orthogonal `R` maximizing `tr(R^T M)`, via nalgebra's SVD.
pub fn procrustes(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = SVD::new(m.clone(), true, true);
    svd.u.unwrap() * svd.v_t.unwrap()
}

/// Dense 2-D Gaussian blur over a `(2r+1)^2` window, `r = max(1, ceil(3 sigma))`,
/// clamping coordinates at the border. `src` is `h x w x c` interleaved.
pub fn naive_conv2d(src: &[f64], h: usize, w: usize, c: usize, sigma: f64) -> Vec<f64> {
    let r = ((3.0 * sigma).ceil() as i64).max(1);
    let mut kernel = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            kernel.push((dy, dx, (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp()));
        }
    }
    let z: f64 = kernel.iter().map(|k| k.2).sum();
    let mut out = vec![0.0; src.len()];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            for ch in 0..c {
                let mut acc = 0.0;
                for &(dy, dx, k) in &kernel {
                    let sy = (y + dy).clamp(0, h as i64 - 1) as usize;
                    let sx = (x + dx).clamp(0, w as i64 - 1) as usize;
                    acc += k * src[(sy * w + sx) * c + ch];
                }
                out[(y as usize * w + x as usize) * c + ch] = acc / z;
            }
        }
    }
    out
}

/// Best IoU per gt label (ascending), by building every mask pair and
/// counting.
pub fn contingency_iou(pred: &[u32], gt: &[u32]) -> Vec<f64> {
    let gts: BTreeSet<u32> = gt.iter().copied().collect();
    let preds: BTreeSet<u32> = pred.iter().copied().collect();
    gts.iter()
        .map(|&g| {
            preds
                .iter()
                .map(|&p| {
                    let mut inter = 0;
                    let mut union = 0;
                    for i in 0..pred.len() {
                        let (a, b) = (pred[i] == p, gt[i] == g);
                        inter += (a && b) as usize;
                        union += (a || b) as usize;
                    }
                    if union == 0 {
                        0.0
                    } else {
                        inter as f64 / union as f64
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Labels renumbered in first-occurrence order.
pub fn first_occurrence(labels: &[usize]) -> Vec<u32> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len() as u32;
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Graph segmentation without smoothing: every merge relabels the absorbed
/// component pixel by pixel. `img` is `h x w x 3`.
pub fn reference_egs(img: &[u8], h: usize, w: usize, k: f64, min_size: usize) -> Vec<u32> {
    let n = h * w;
    let mut edges = Vec::new();
    for p in 0..n {
        let (py, px) = ((p / w) as i64, (p % w) as i64);
        for q in p + 1..n {
            let (qy, qx) = ((q / w) as i64, (q % w) as i64);
            if (py - qy).abs() <= 1 && (px - qx).abs() <= 1 {
                let d2: f64 = (0..3)
                    .map(|c| (img[p * 3 + c] as f64 - img[q * 3 + c] as f64).powi(2))
                    .sum();
                edges.push((d2.sqrt(), p, q));
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut comp: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut internal = vec![0.0f64; n];
    let absorb = |comp: &mut Vec<usize>, size: &mut Vec<usize>, keep: usize, gone: usize| {
        for c in comp.iter_mut() {
            if *c == gone {
                *c = keep;
            }
        }
        size[keep] += size[gone];
    };
    for &(wt, p, q) in &edges {
        let (a, b) = (comp[p], comp[q]);
        if a == b {
            continue;
        }
        let limit = (internal[a] + k / size[a] as f64).min(internal[b] + k / size[b] as f64);
        if wt <= limit {
            absorb(&mut comp, &mut size, a, b);
            internal[a] = wt;
        }
    }
    for &(_, p, q) in &edges {
        let (a, b) = (comp[p], comp[q]);
        if a != b && (size[a] < min_size || size[b] < min_size) {
            absorb(&mut comp, &mut size, a, b);
        }
    }
    first_occurrence(&comp)
}

/// Distinct label pairs `(a, b)`, `a < b`, over all 4-neighboring pixel pairs.
pub fn brute_adjacency(labels: &[u32], h: usize, w: usize) -> BTreeSet<(u32, u32)> {
    let mut out = BTreeSet::new();
    for p in 0..h * w {
        for q in 0..h * w {
            let (dy, dx) = ((p / w).abs_diff(q / w), (p % w).abs_diff(q % w));
            if dy + dx == 1 && labels[p] != labels[q] {
                out.insert((labels[p].min(labels[q]), labels[p].max(labels[q])));
            }
        }
    }
    out
}

/// True when every label's pixels form one 4-connected region (BFS).
pub fn labels_are_connected(labels: &[u32], h: usize, w: usize) -> bool {
    let mut seen_label = BTreeSet::new();
    let mut visited = vec![false; labels.len()];
    for start in 0..labels.len() {
        if visited[start] {
            continue;
        }
        if !seen_label.insert(labels[start]) {
            return false;
        }
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(p) = queue.pop_front() {
            let (y, x) = (p / w, p % w);
            let mut nb = Vec::with_capacity(4);
            if y > 0 {
                nb.push(p - w);
            }
            if y + 1 < h {
                nb.push(p + w);
            }
            if x > 0 {
                nb.push(p - 1);
            }
            if x + 1 < w {
                nb.push(p + 1);
            }
            for q in nb {
                if !visited[q] && labels[q] == labels[start] {
                    visited[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    true
}
