//! Best-match segmentation IoU and dataset aggregation.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor_io::LabelMap;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch((usize, usize), (usize, usize)),
    #[error("mask lengths differ: {0} vs {1}")]
    MaskLengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    EmptyDataset,
    #[error("image {0} has no ground truth")]
    MissingGroundTruth(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// `|a & b| / |a | b|`, 0 when both masks are empty.
pub fn iou(a: &[bool], b: &[bool]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::MaskLengthMismatch(a.len(), b.len()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

fn dims(m: &LabelMap) -> (usize, usize) {
    (m.height(), m.width())
}

/// For every gt label in ascending order, the best IoU any predicted
/// segment achieves against it.
pub fn best_match_iou(pred: &LabelMap, gt: &LabelMap) -> Result<Vec<f64>, EvalError> {
    best_match_iou_with(pred, gt, None)
}

/// As [`best_match_iou`]; pixels whose gt equals `ignore` are dropped from
/// every count.
pub fn best_match_iou_with(pred: &LabelMap, gt: &LabelMap, ignore: Option<u32>) -> Result<Vec<f64>, EvalError> {
    if dims(pred) != dims(gt) {
        return Err(EvalError::DimMismatch(dims(pred), dims(gt)));
    }
    let mut joint: HashMap<(u32, u32), usize> = HashMap::new();
    let mut n_pred: HashMap<u32, usize> = HashMap::new();
    let mut n_gt: BTreeMap<u32, usize> = BTreeMap::new();
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if Some(g) == ignore {
            continue;
        }
        *joint.entry((p, g)).or_default() += 1;
        *n_pred.entry(p).or_default() += 1;
        *n_gt.entry(g).or_default() += 1;
    }
    let mut best: HashMap<u32, f64> = HashMap::new();
    for (&(p, g), &n) in &joint {
        let v = n as f64 / (n_pred[&p] + n_gt[&g] - n) as f64;
        let e = best.entry(g).or_insert(0.0);
        *e = e.max(v);
    }
    Ok(n_gt.keys().map(|g| best[g]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub id: String,
    /// Best IoU per gt segment; with several gt maps, their lists are
    /// concatenated in the order given.
    pub scores: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_image: Vec<ImageScore>,
    /// Mean over every gt segment of every image.
    pub dataset_mean: f64,
    /// Mean of the per-image means.
    pub image_weighted_mean: f64,
    pub segment_count: usize,
    pub metadata: serde_json::Value,
}

/// One image of a dataset: its prediction and one or more gt maps.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub id: String,
    pub pred: LabelMap,
    pub gts: Vec<LabelMap>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn score_item(item: &EvalItem, ignore: Option<u32>) -> Result<ImageScore, EvalError> {
    if item.gts.is_empty() {
        return Err(EvalError::MissingGroundTruth(item.id.clone()));
    }
    let mut scores = Vec::new();
    for gt in &item.gts {
        scores.extend(best_match_iou_with(&item.pred, gt, ignore)?);
    }
    Ok(ImageScore {
        id: item.id.clone(),
        mean: mean(&scores),
        scores,
    })
}

/// Scores every item in parallel; `per_image` is sorted by id.
pub fn evaluate_dataset(
    items: &[EvalItem],
    ignore: Option<u32>,
    metadata: serde_json::Value,
) -> Result<EvalReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let per_image = items
        .par_iter()
        .map(|it| score_item(it, ignore))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(per_image, metadata))
}

/// Builds a report from per-image scores, sorting them by id.
pub fn aggregate(mut per_image: Vec<ImageScore>, metadata: serde_json::Value) -> EvalReport {
    per_image.sort_by(|a, b| a.id.cmp(&b.id));
    let all: Vec<f64> = per_image.iter().flat_map(|s| s.scores.iter().copied()).collect();
    let means: Vec<f64> = per_image.iter().map(|s| s.mean).collect();
    EvalReport {
        dataset_mean: mean(&all),
        image_weighted_mean: mean(&means),
        segment_count: all.len(),
        per_image,
        metadata,
    }
}

impl EvalReport {
    /// `id,segment_index,best_iou`, one row per gt segment.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<(), EvalError> {
        writeln!(w, "id,segment_index,best_iou")?;
        for img in &self.per_image {
            for (i, s) in img.scores.iter().enumerate() {
                writeln!(w, "{},{},{:.6}", img.id, i, s)?;
            }
        }
        Ok(())
    }

    /// Aggregate statistics, per-image means and metadata.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dataset_mean": self.dataset_mean,
            "image_weighted_mean": self.image_weighted_mean,
            "segment_count": self.segment_count,
            "image_count": self.per_image.len(),
            "per_image": self.per_image.iter().map(|s| serde_json::json!({
                "id": s.id,
                "mean": s.mean,
                "segments": s.scores.len(),
            })).collect::<Vec<_>>(),
            "metadata": self.metadata,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub mean_iou: f64,
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: &mut W) -> Result<(), EvalError> {
    writeln!(w, "k,mean_iou")?;
    for r in rows {
        writeln!(w, "{},{:.6}", r.k, r.mean_iou)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(h: usize, w: usize, v: &[u32]) -> LabelMap {
        LabelMap::new(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn iou_trivial_cases() {
        let a = [true, true, false, true];
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&[true, false], &[false, true]).unwrap(), 0.0);
        assert_eq!(iou(&[false; 3], &[false; 3]).unwrap(), 0.0);
        // 4 px each, 2 shared, union 6
        let x = [true, true, true, true, false, false];
        let y = [false, false, true, true, true, true];
        assert_eq!(iou(&x, &y).unwrap(), 1.0 / 3.0);
        assert!(iou(&[true], &[true, false]).is_err());
    }

    #[test]
    fn best_match_trivial_cases() {
        let gt = map(2, 2, &[0, 1, 0, 1]);
        assert_eq!(best_match_iou(&gt, &gt).unwrap(), vec![1.0, 1.0]);
        assert_eq!(best_match_iou(&LabelMap::constant(2, 2, 0), &gt).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(
            best_match_iou(&LabelMap::constant(1, 4, 0), &gt),
            Err(EvalError::DimMismatch(..))
        ));
    }

    #[test]
    fn ignore_label_drops_pixels() {
        let gt = map(1, 4, &[0, 1, 1, 2]);
        let pred = map(1, 4, &[5, 5, 5, 6]);
        assert_eq!(best_match_iou_with(&pred, &gt, Some(0)).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn dataset_mean_is_segment_weighted() {
        let one = EvalItem {
            id: "a".into(),
            pred: map(1, 2, &[0, 0]),
            gts: vec![map(1, 2, &[0, 0])],
        };
        // pred splits nothing, gt has two segments that each get 0.5
        let two = EvalItem {
            id: "b".into(),
            pred: map(1, 2, &[0, 0]),
            gts: vec![map(1, 2, &[0, 1])],
        };
        let r = evaluate_dataset(&[two, one], None, serde_json::Value::Null).unwrap();
        assert_eq!(r.per_image[0].id, "a");
        assert!((r.dataset_mean - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.image_weighted_mean - 0.75).abs() < 1e-12);
        assert_eq!(r.segment_count, 3);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
    }

    #[test]
    fn aggregation_counts_segments_not_images() {
        let r = aggregate(
            vec![
                ImageScore { id: "p".into(), scores: vec![1.0], mean: 1.0 },
                ImageScore { id: "q".into(), scores: vec![0.0, 0.0], mean: 0.0 },
            ],
            serde_json::Value::Null,
        );
        assert!((r.dataset_mean - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.image_weighted_mean, 0.5);
        assert!(matches!(
            evaluate_dataset(&[], None, serde_json::Value::Null),
            Err(EvalError::EmptyDataset)
        ));
    }

    proptest! {
        #[test]
        fn relabeling_invariance(
            pred in prop::collection::vec(0u32..4, 36),
            gt in prop::collection::vec(0u32..3, 36),
        ) {
            let p = map(6, 6, &pred);
            let g = map(6, 6, &gt);
            let base = best_match_iou(&p, &g).unwrap();
            let p2 = map(6, 6, &pred.iter().map(|v| 100 - v).collect::<Vec<_>>());
            prop_assert_eq!(&best_match_iou(&p2, &g).unwrap(), &base);
            // a monotone relabel of gt keeps the segment order
            let g2 = map(6, 6, &gt.iter().map(|v| v * 7 + 3).collect::<Vec<_>>());
            prop_assert_eq!(&best_match_iou(&p, &g2).unwrap(), &base);
            prop_assert!(base.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn iou_is_symmetric(a in prop::collection::vec(any::<bool>(), 20), b in prop::collection::vec(any::<bool>(), 20)) {
            prop_assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
        }
    }
}
