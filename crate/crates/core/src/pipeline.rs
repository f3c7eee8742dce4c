//! End-to-end workflow: hash training, segmentation, baselines and dataset
//! evaluation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binmap::{encode_feature_map, superpixel_codes_with, BinMapError, BinaryMap, CodeAssign};
use crate::egs::{egs_segment, EgsError, EgsParams};
use crate::eval::{evaluate_dataset, EvalError, EvalItem, EvalReport, SweepRow};
use crate::itq::{train_hash_with, FeatureNorm, HashModel, ItqError, TrainOptions, TrainedHash};
use crate::merge::{merge_superpixels, MergeError, MergePolicy, MergeScope};
use crate::superpixel::{slic_with, SlicParams, SuperpixelError, SuperpixelSet};
use crate::tensor_io::{read_image, read_tensor, LabelMap, Tensor3, TensorIoError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("superpixel stage: {0}")]
    Superpixel(#[from] SuperpixelError),
    #[error("binary map stage: {0}")]
    BinaryMap(#[from] BinMapError),
    #[error("merge stage: {0}")]
    Merge(#[from] MergeError),
    #[error("egs baseline: {0}")]
    Egs(#[from] EgsError),
    #[error("hash training: {0}")]
    Train(#[from] ItqError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Load {
        path: PathBuf,
        #[source]
        source: TensorIoError,
    },
    #[error("{0}")]
    Dataset(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Every tunable of the workflow. Missing fields take their defaults when
/// deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub bits: usize,
    pub itq_iters: usize,
    pub seed: u64,
    pub superpixel_k: usize,
    pub compactness: f64,
    pub slic_iters: usize,
    pub slic_min_size: Option<usize>,
    pub merge_max_hamming: u32,
    pub merge_scope: MergeScope,
    pub code_assign: CodeAssign,
    pub egs_sigma: f64,
    pub egs_k: f64,
    pub egs_min_size: usize,
    /// Cap on pooled training rows; larger pools are subsampled with `seed`.
    pub max_rows: Option<usize>,
    pub normalization: FeatureNorm,
    pub ignore_label: Option<u32>,
}

pub const DEFAULT_MAX_ROWS: usize = 100_000;

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bits: 8,
            itq_iters: 50,
            seed: 0,
            superpixel_k: 200,
            compactness: 10.0,
            slic_iters: 10,
            slic_min_size: None,
            merge_max_hamming: 0,
            merge_scope: MergeScope::Adjacent,
            code_assign: CodeAssign::Majority,
            egs_sigma: 1.0,
            egs_k: 100.0,
            egs_min_size: 50,
            max_rows: Some(DEFAULT_MAX_ROWS),
            normalization: FeatureNorm::None,
            ignore_label: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(1..=crate::itq::MAX_BITS).contains(&self.bits) {
            return bad(format!("bits must be in 1..={}, got {}", crate::itq::MAX_BITS, self.bits));
        }
        if self.superpixel_k == 0 {
            return bad("superpixel_k must be >= 1".into());
        }
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return bad(format!("compactness must be > 0, got {}", self.compactness));
        }
        if self.merge_max_hamming as usize > self.bits {
            return bad(format!(
                "merge_max_hamming {} exceeds bits {}",
                self.merge_max_hamming, self.bits
            ));
        }
        if self.max_rows == Some(0) {
            return bad("max_rows must be >= 1".into());
        }
        self.egs_params().validate()?;
        Ok(())
    }

    pub fn slic_params(&self) -> SlicParams {
        SlicParams {
            k: self.superpixel_k,
            compactness: self.compactness,
            iters: self.slic_iters,
            min_size: self.slic_min_size,
        }
    }

    pub fn egs_params(&self) -> EgsParams {
        EgsParams {
            sigma: self.egs_sigma,
            k: self.egs_k,
            min_size: self.egs_min_size,
        }
    }

    pub fn merge_policy(&self) -> MergePolicy {
        MergePolicy {
            max_hamming: self.merge_max_hamming,
            scope: self.merge_scope,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            iters: self.itq_iters,
            seed: self.seed,
            normalization: self.normalization,
            ..TrainOptions::new(self.bits)
        }
    }
}

/// Pools every cell of every feature map into one `rows x dim` matrix,
/// keeping a seeded sorted subsample when `cap` is exceeded. Also returns
/// the number of rows available before subsampling.
pub fn training_matrix(features: &[&Tensor3], cap: Option<usize>, seed: u64) -> Result<(DMatrix<f64>, usize)> {
    let Some(first) = features.first() else {
        return Err(PipelineError::Dataset("no feature maps to train on".into()));
    };
    let d = first.channels();
    if let Some((i, f)) = features.iter().enumerate().find(|(_, f)| f.channels() != d) {
        return Err(PipelineError::Dataset(format!(
            "feature map {i} has {} channels, expected {d}",
            f.channels()
        )));
    }
    let total: usize = features.iter().map(|f| f.pixel_count()).sum();
    let keep: Vec<usize> = match cap {
        Some(c) if c < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, total, c).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..total).collect(),
    };
    let mut slices: Vec<&[f32]> = Vec::with_capacity(features.len());
    for f in features {
        slices.push(f.as_f32().map_err(|e| PipelineError::Dataset(e.to_string()))?);
    }
    let mut offsets = Vec::with_capacity(features.len());
    let mut acc = 0;
    for f in features {
        offsets.push(acc);
        acc += f.pixel_count();
    }
    let m = DMatrix::from_fn(keep.len(), d, |r, c| {
        let g = keep[r];
        let fi = offsets.partition_point(|&o| o <= g) - 1;
        slices[fi][(g - offsets[fi]) * d + c] as f64
    });
    Ok((m, total))
}

/// Trains the hash on the pooled cells of `features`.
pub fn train_from_features(features: &[&Tensor3], cfg: &PipelineConfig) -> Result<TrainedHash> {
    cfg.validate()?;
    let (x, available) = training_matrix(features, cfg.max_rows, cfg.seed)?;
    let mut trained = train_hash_with(&x, &cfg.train_options())?;
    trained.model.info.rows_available = available;
    trained.model.info.row_cap = cfg.max_rows;
    Ok(trained)
}

/// Intermediate products of one segmentation run.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub superpixels: SuperpixelSet,
    pub binary_map: BinaryMap,
    pub codes: Vec<crate::itq::BitCode>,
    pub labels: LabelMap,
}

/// Superpixels, then binary codes, then merging of equal-code neighbors.
pub fn segment_image(image: &Tensor3, features: &Tensor3, model: &HashModel, cfg: &PipelineConfig) -> Result<Segmentation> {
    let superpixels = slic_with(image, &cfg.slic_params())?;
    let binary_map = encode_feature_map(model, features)?;
    let codes = superpixel_codes_with(&binary_map, &superpixels, cfg.code_assign);
    let labels = merge_superpixels(&superpixels, &codes, &cfg.merge_policy())?;
    Ok(Segmentation {
        superpixels,
        binary_map,
        codes,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Superpixels merged by binary code.
    Binseg,
    Egs,
    Slic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Binseg => "binseg",
            Method::Egs => "egs",
            Method::Slic => "slic",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "binseg" => Ok(Method::Binseg),
            "egs" => Ok(Method::Egs),
            "slic" => Ok(Method::Slic),
            _ => Err(format!("unknown method {s:?} (expected binseg, egs or slic)")),
        }
    }
}

pub fn run_baseline(image: &Tensor3, method: Method, cfg: &PipelineConfig) -> Result<LabelMap> {
    match method {
        Method::Egs => Ok(egs_segment(image, &cfg.egs_params())?),
        Method::Slic => Ok(slic_with(image, &cfg.slic_params())?.labels),
        Method::Binseg => Err(PipelineError::Config("binseg is not a baseline".into())),
    }
}

/// One image of a dataset directory, loaded.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Tensor3,
    pub features: Option<Tensor3>,
    pub gts: Vec<LabelMap>,
}

/// File names belonging to one image id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub id: String,
    pub image: PathBuf,
    pub features: Option<PathBuf>,
    pub gts: Vec<PathBuf>,
}

/// Groups `<id>.ppm`, `<id>.feat.btsr`, `<id>.gt.btsr` and
/// `<id>.gt.<tag>.btsr` files by id, sorted by id. Ids without an image are
/// ignored.
pub fn scan_dataset(dir: impl AsRef<Path>) -> Result<Vec<DatasetEntry>> {
    let dir = dir.as_ref();
    let read = std::fs::read_dir(dir).map_err(|e| PipelineError::Dataset(format!("{}: {e}", dir.display())))?;
    let mut names: Vec<String> = Vec::new();
    for entry in read {
        let entry = entry.map_err(|e| PipelineError::Dataset(format!("{}: {e}", dir.display())))?;
        if let Some(n) = entry.file_name().to_str() {
            names.push(n.to_owned());
        }
    }
    names.sort();
    let mut by_id: BTreeMap<String, DatasetEntry> = BTreeMap::new();
    for n in names.iter().filter_map(|n| n.strip_suffix(".ppm")) {
        by_id.insert(
            n.to_owned(),
            DatasetEntry {
                id: n.to_owned(),
                image: dir.join(format!("{n}.ppm")),
                features: None,
                gts: Vec::new(),
            },
        );
    }
    for n in &names {
        let Some(stem) = n.strip_suffix(".btsr") else { continue };
        if let Some(id) = stem.strip_suffix(".feat") {
            if let Some(e) = by_id.get_mut(id) {
                e.features = Some(dir.join(n));
            }
        } else if let Some(id) = stem.strip_suffix(".gt") {
            if let Some(e) = by_id.get_mut(id) {
                e.gts.insert(0, dir.join(n));
            }
        } else if let Some((id, _tag)) = stem.rsplit_once(".gt.") {
            if let Some(e) = by_id.get_mut(id) {
                e.gts.push(dir.join(n));
            }
        }
    }
    Ok(by_id.into_values().collect())
}

fn load<T>(path: &Path, f: impl FnOnce(&Path) -> Result<T, TensorIoError>) -> Result<T> {
    f(path).map_err(|source| PipelineError::Load {
        path: path.to_owned(),
        source,
    })
}

impl DatasetEntry {
    pub fn load(&self) -> Result<Sample> {
        let image = load(&self.image, |p| read_image(p))?;
        let features = match &self.features {
            Some(p) => Some(load(p, |p| read_tensor(p))?),
            None => None,
        };
        let mut gts = Vec::with_capacity(self.gts.len());
        for p in &self.gts {
            gts.push(load(p, |p| LabelMap::from_tensor(&read_tensor(p)?))?);
        }
        Ok(Sample {
            id: self.id.clone(),
            image,
            features,
            gts,
        })
    }
}

/// Scans and loads a dataset directory; empty directories are an error.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let dir = dir.as_ref();
    let entries = scan_dataset(dir)?;
    if entries.is_empty() {
        return Err(PipelineError::Eval(EvalError::EmptyDataset));
    }
    entries.par_iter().map(DatasetEntry::load).collect()
}

/// Trains on the features of every sample that has them.
pub fn train_on_samples(samples: &[Sample], cfg: &PipelineConfig) -> Result<TrainedHash> {
    let feats: Vec<&Tensor3> = samples.iter().filter_map(|s| s.features.as_ref()).collect();
    train_from_features(&feats, cfg)
}

pub fn predict(sample: &Sample, method: Method, model: Option<&HashModel>, cfg: &PipelineConfig) -> Result<LabelMap> {
    match method {
        Method::Binseg => {
            let model = model.ok_or_else(|| PipelineError::Config("binseg needs a hash model".into()))?;
            let features = sample
                .features
                .as_ref()
                .ok_or_else(|| PipelineError::Dataset(format!("{}: missing feature map", sample.id)))?;
            Ok(segment_image(&sample.image, features, model, cfg)?.labels)
        }
        baseline => run_baseline(&sample.image, baseline, cfg),
    }
}

/// Metadata embedded in every report.
pub fn report_metadata(method: Method, cfg: &PipelineConfig, gt_maps: usize) -> serde_json::Value {
    serde_json::json!({
        "method": method.name(),
        "superpixel_k": cfg.superpixel_k,
        "gt_maps": gt_maps,
        "gt_pooling": "segments of every gt map are pooled into the image's list",
        "config": cfg,
    })
}

/// Runs `method` on every sample in parallel and scores it.
pub fn evaluate_method(
    samples: &[Sample],
    method: Method,
    model: Option<&HashModel>,
    cfg: &PipelineConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let items = samples
        .par_iter()
        .map(|s| {
            Ok(EvalItem {
                id: s.id.clone(),
                pred: predict(s, method, model, cfg)?,
                gts: s.gts.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gt_maps = samples.iter().map(|s| s.gts.len()).sum();
    Ok(evaluate_dataset(&items, cfg.ignore_label, report_metadata(method, cfg, gt_maps))?)
}

/// Dataset mean IoU of the full pipeline at every superpixel count.
pub fn sweep_superpixels(samples: &[Sample], model: &HashModel, ks: &[usize], cfg: &PipelineConfig) -> Result<Vec<SweepRow>> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(PipelineError::Config("superpixel counts must be a nonempty list of positive values".into()));
    }
    ks.iter()
        .map(|&k| {
            let c = PipelineConfig {
                superpixel_k: k,
                ..cfg.clone()
            };
            let r = evaluate_method(samples, Method::Binseg, Some(model), &c)?;
            Ok(SweepRow {
                k,
                mean_iou: r.dataset_mean,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::make_scene;

    #[test]
    fn config_round_trips_and_defaults_fill_in() {
        let c: PipelineConfig = serde_json::from_str(r#"{"bits": 12, "merge_scope": "global"}"#).unwrap();
        assert_eq!(c.bits, 12);
        assert_eq!(c.merge_scope, MergeScope::Global);
        assert_eq!(c.egs_k, 100.0);
        let back: PipelineConfig = serde_json::from_value(serde_json::to_value(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bitz": 1}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        for c in [
            PipelineConfig { bits: 0, ..Default::default() },
            PipelineConfig { bits: 65, ..Default::default() },
            PipelineConfig { merge_max_hamming: 9, ..Default::default() },
            PipelineConfig { egs_k: -1.0, ..Default::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn training_matrix_pools_and_caps() {
        let a = Tensor3::from_f32(1, 2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let b = Tensor3::from_f32(1, 1, 2, vec![4.0, 5.0]).unwrap();
        let (m, n) = training_matrix(&[&a, &b], None, 0).unwrap();
        assert_eq!(n, 3);
        assert_eq!(m.row(2)[1], 5.0);
        let (c, _) = training_matrix(&[&a, &b], Some(2), 7).unwrap();
        assert_eq!(c.nrows(), 2);
        assert_eq!(training_matrix(&[&a, &b], Some(2), 7).unwrap().0, c);
        let odd = Tensor3::from_f32(1, 1, 3, vec![0.0; 3]).unwrap();
        assert!(training_matrix(&[&a, &odd], None, 0).is_err());
    }

    #[test]
    fn scene_segments_into_regions() {
        let s = make_scene(8, 12, 8, 16, 3, 2);
        let cfg = PipelineConfig {
            superpixel_k: 60,
            ..Default::default()
        };
        let model = train_from_features(&[&s.features], &cfg).unwrap().model;
        let seg = segment_image(&s.image, &s.features, &model, &cfg).unwrap();
        let scores = crate::eval::best_match_iou(&seg.labels, &s.gt).unwrap();
        assert!(scores.iter().all(|&v| v > 0.85), "{scores:?}");
    }

    #[test]
    fn dataset_scan_groups_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = make_scene(4, 4, 2, 4, 2, 0);
        s.write_to(dir.path(), "b").unwrap();
        s.write_to(dir.path(), "a").unwrap();
        crate::tensor_io::write_tensor(&s.gt.to_tensor(), dir.path().join("a.gt.2.btsr")).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let entries = scan_dataset(dir.path()).unwrap();
        assert_eq!(entries.iter().map(|e| e.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(entries[0].gts.len(), 2);
        assert!(entries[0].gts[0].ends_with("a.gt.btsr"));
        let samples = load_dataset(dir.path()).unwrap();
        let r = evaluate_method(&samples, Method::Slic, None, &PipelineConfig { superpixel_k: 4, ..Default::default() }).unwrap();
        assert_eq!(r.per_image.len(), 2);
        assert_eq!(r.segment_count, 2 + 2 + 2);
    }

    #[test]
    fn method_names() {
        for m in [Method::Binseg, Method::Egs, Method::Slic] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("watershed".parse::<Method>().is_err());
    }
}
