mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use binseg_core::binmap::{upscale_nearest, visualize_binary_map, BinaryMap, CodeAssign};
use binseg_core::eval::write_sweep_csv;
use binseg_core::fixtures::{make_scene_with, SceneSpec, Texture};
use binseg_core::itq::{read_model, write_model_to, FeatureNorm, HashModel};
use binseg_core::merge::{colorize_labels, MergeScope};
use binseg_core::pipeline::{
    load_dataset, run_baseline, segment_image, sweep_superpixels, train_from_features, train_on_samples,
    evaluate_method, Method, PipelineConfig,
};
use binseg_core::tensor_io::{read_image, read_tensor, write_image_to, write_tensor_to, LabelMap, Tensor3};

use output::Outputs;

#[derive(Parser)]
#[command(name = "binseg", version, about = "Superpixel merging by learned binary codes")]
struct Cli {
    /// Worker thread cap.
    #[arg(long, global = true, env = "BINSEG_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a binary hash from feature maps.
    TrainHash {
        /// Feature map tensors (BTSR, float32).
        #[arg(long = "features", required = true, num_args = 1..)]
        features: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Segment one image with the full pipeline.
    Segment {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Output label map (BTSR, uint32).
        #[arg(long)]
        out: PathBuf,
        /// Also write the cell-level binary map as a BTSR u8 tensor.
        #[arg(long)]
        binary_map_out: Option<PathBuf>,
        /// Directory for superpixel, binary map and segment images.
        #[arg(long)]
        viz_dir: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Segment one image with a baseline method.
    Baseline {
        #[arg(long)]
        image: PathBuf,
        /// egs or slic.
        #[arg(long)]
        method: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a method on a dataset directory.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// binseg, egs or slic.
        #[arg(long, default_value = "binseg")]
        method: String,
        /// Hash model for binseg; trained on the dataset's features if absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        out_json: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Dataset mean IoU of the pipeline over several superpixel counts.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        k_values: Vec<usize>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Render tensors as images, or write a synthetic scene.
    Viz(VizArgs),
}

#[derive(Args)]
struct VizArgs {
    /// Binary map tensor (BTSR, u8, one channel per bit).
    #[arg(long, conflicts_with_all = ["labels", "make_fixture"])]
    binary_map: Option<PathBuf>,
    /// Label map tensor (BTSR, uint32).
    #[arg(long, conflicts_with = "make_fixture")]
    labels: Option<PathBuf>,
    /// Upscale the output to this image's size.
    #[arg(long)]
    like: Option<PathBuf>,
    #[arg(long, required_unless_present = "make_fixture")]
    out: Option<PathBuf>,
    /// Write a synthetic scene dataset into this directory.
    #[arg(long)]
    make_fixture: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    scenes: u64,
    #[arg(long, default_value_t = 14)]
    cell_rows: usize,
    #[arg(long, default_value_t = 22)]
    cell_cols: usize,
    #[arg(long, default_value_t = 16)]
    scale: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    regions: usize,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// flat or stripes.
    #[arg(long, default_value = "flat", value_parser = serde_enum::<Texture>)]
    texture: Texture,
}

fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

/// Flags that override fields of the configuration file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// JSON configuration; flags take precedence over its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bits: Option<usize>,
    #[arg(long)]
    itq_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    superpixel_k: Option<usize>,
    #[arg(long)]
    compactness: Option<f64>,
    #[arg(long)]
    slic_iters: Option<usize>,
    #[arg(long)]
    slic_min_size: Option<usize>,
    #[arg(long)]
    merge_max_hamming: Option<u32>,
    /// adjacent or global.
    #[arg(long, value_parser = serde_enum::<MergeScope>)]
    merge_scope: Option<MergeScope>,
    /// majority or center.
    #[arg(long, value_parser = serde_enum::<CodeAssign>)]
    code_assign: Option<CodeAssign>,
    #[arg(long)]
    egs_sigma: Option<f64>,
    #[arg(long)]
    egs_k: Option<f64>,
    #[arg(long)]
    egs_min_size: Option<usize>,
    /// Training row cap.
    #[arg(long, conflicts_with = "no_row_cap")]
    max_rows: Option<usize>,
    /// Train on every available row.
    #[arg(long)]
    no_row_cap: bool,
    /// none or l2.
    #[arg(long, value_parser = serde_enum::<FeatureNorm>)]
    normalization: Option<FeatureNorm>,
    /// Gt label excluded from scoring.
    #[arg(long)]
    ignore_label: Option<u32>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(
            bits,
            itq_iters,
            seed,
            superpixel_k,
            compactness,
            slic_iters,
            merge_max_hamming,
            merge_scope,
            code_assign,
            egs_sigma,
            egs_k,
            egs_min_size,
            normalization
        );
        if self.slic_min_size.is_some() {
            c.slic_min_size = self.slic_min_size;
        }
        if self.max_rows.is_some() {
            c.max_rows = self.max_rows;
        }
        if self.no_row_cap {
            c.max_rows = None;
        }
        if self.ignore_label.is_some() {
            c.ignore_label = self.ignore_label;
        }
        c.validate()?;
        Ok(c)
    }
}

fn load_image(p: &Path) -> Result<Tensor3> {
    read_image(p).with_context(|| format!("reading image {}", p.display()))
}

fn load_tensor(p: &Path) -> Result<Tensor3> {
    read_tensor(p).with_context(|| format!("reading tensor {}", p.display()))
}

fn load_model(p: &Path) -> Result<HashModel> {
    read_model(p).with_context(|| format!("reading model {}", p.display()))
}

fn tensor_bytes(t: &Tensor3) -> impl FnOnce(&mut Vec<u8>) -> Result<()> + '_ {
    move |b| Ok(write_tensor_to(t, b)?)
}

fn image_bytes(t: &Tensor3) -> impl FnOnce(&mut Vec<u8>) -> Result<()> + '_ {
    move |b| Ok(write_image_to(t, b)?)
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json value") + "\n"
}

fn file_stem(p: &Path) -> String {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    name.split('.').next().unwrap_or(name).to_owned()
}

fn train_hash(features: &[PathBuf], out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let maps = features.iter().map(|p| load_tensor(p)).collect::<Result<Vec<_>>>()?;
    let d = maps[0].channels();
    if let Some((p, m)) = features.iter().zip(&maps).find(|(_, m)| m.channels() != d) {
        bail!(
            "{} has {} channels but {} has {d}",
            p.display(),
            m.channels(),
            features[0].display()
        );
    }
    let refs: Vec<&Tensor3> = maps.iter().collect();
    let trained = train_from_features(&refs, cfg)?;
    let mut outs = Outputs::new();
    outs.write(out, |b| Ok(write_model_to(&trained.model, b)?))?;
    outs.commit();
    let info = &trained.model.info;
    println!(
        "trained {} bits on {} of {} rows; final quantization loss {:.6}",
        trained.model.bits(),
        info.rows_used,
        info.rows_available,
        info.final_loss
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn segment(
    image: &Path,
    features: &Path,
    model: &Path,
    out: &Path,
    binary_map_out: Option<&Path>,
    viz_dir: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<()> {
    let img = load_image(image)?;
    let feats = load_tensor(features)?;
    let model = load_model(model)?;
    let seg = segment_image(&img, &feats, &model, cfg)?;
    let mut outs = Outputs::new();
    outs.write(out, tensor_bytes(&seg.labels.to_tensor()))?;
    if let Some(p) = binary_map_out {
        outs.write(p, tensor_bytes(&seg.binary_map.to_tensor()))?;
    }
    if let Some(dir) = viz_dir {
        let stem = file_stem(image);
        outs.write(
            &dir.join(format!("{stem}.superpixels.ppm")),
            image_bytes(&colorize_labels(&seg.superpixels.labels)),
        )?;
        outs.write(&dir.join(format!("{stem}.segments.ppm")), image_bytes(&colorize_labels(&seg.labels)))?;
        match visualize_binary_map(&seg.binary_map) {
            Ok(v) => {
                let up = upscale_nearest(&v, img.height(), img.width())?;
                let ext = if up.channels() == 1 { "pgm" } else { "ppm" };
                outs.write(&dir.join(format!("{stem}.binary_map.{ext}")), image_bytes(&up))?;
            }
            Err(e) => eprintln!("warning: binary map not rendered: {e}"),
        }
    }
    outs.commit();
    println!("{} segments from {} superpixels", seg.labels.segment_count(), seg.superpixels.count);
    Ok(())
}

fn baseline(image: &Path, method: &str, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let m: Method = method.parse().map_err(anyhow::Error::msg)?;
    if m == Method::Binseg {
        bail!("unknown baseline {method:?} (expected egs or slic)");
    }
    let img = load_image(image)?;
    let labels = run_baseline(&img, m, cfg)?;
    let mut outs = Outputs::new();
    outs.write(out, tensor_bytes(&labels.to_tensor()))?;
    outs.commit();
    println!("{} segments", labels.segment_count());
    Ok(())
}

/// The given model, or one trained on the samples' features.
fn model_for(
    samples: &[binseg_core::pipeline::Sample],
    model: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<(HashModel, serde_json::Value)> {
    match model {
        Some(p) => Ok((load_model(p)?, serde_json::json!(p.display().to_string()))),
        None => {
            let trained = train_on_samples(samples, cfg).context("training a hash on the dataset features")?;
            Ok((trained.model, serde_json::json!("trained on the evaluated dataset")))
        }
    }
}

fn eval(
    dataset: &Path,
    method: &str,
    model: Option<&Path>,
    out_csv: &Path,
    out_json: &Path,
    cfg: &PipelineConfig,
) -> Result<()> {
    let m: Method = method.parse().map_err(anyhow::Error::msg)?;
    let samples = load_dataset(dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    let (model, source) = match m {
        Method::Binseg => {
            let (model, source) = model_for(&samples, model, cfg)?;
            (Some(model), source)
        }
        _ => (None, serde_json::Value::Null),
    };
    let mut report = evaluate_method(&samples, m, model.as_ref(), cfg)?;
    report.metadata["model"] = source;
    let mut outs = Outputs::new();
    outs.write(out_csv, |b| Ok(report.write_csv(b)?))?;
    outs.write_str(out_json, &pretty(&report.summary_json()))?;
    outs.commit();
    println!(
        "{}: mean IoU {:.4} over {} segments of {} images",
        m.name(),
        report.dataset_mean,
        report.segment_count,
        report.per_image.len()
    );
    Ok(())
}

fn sweep(dataset: &Path, ks: &[usize], model: Option<&Path>, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let samples = load_dataset(dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    let (model, _) = model_for(&samples, model, cfg)?;
    let rows = sweep_superpixels(&samples, &model, ks, cfg)?;
    let mut outs = Outputs::new();
    outs.write(out, |b| Ok(write_sweep_csv(&rows, b)?))?;
    outs.commit();
    for r in &rows {
        println!("k={} mean IoU {:.4}", r.k, r.mean_iou);
    }
    Ok(())
}

fn viz(a: &VizArgs) -> Result<()> {
    let mut outs = Outputs::new();
    if let Some(dir) = &a.make_fixture {
        for seed in a.first_seed..a.first_seed + a.scenes {
            let spec = SceneSpec {
                height: a.cell_rows,
                width: a.cell_cols,
                scale: a.scale,
                dim: a.dim,
                regions: a.regions,
                seed,
                texture: a.texture,
            };
            if a.regions == 0 || a.regions > a.cell_rows * a.cell_cols || a.dim < a.regions || a.scale == 0 {
                bail!("invalid scene parameters");
            }
            let scene = make_scene_with(&spec);
            let id = format!("scene{seed:03}");
            outs.write(&dir.join(format!("{id}.ppm")), image_bytes(&scene.image))?;
            outs.write(&dir.join(format!("{id}.feat.btsr")), tensor_bytes(&scene.features))?;
            outs.write(&dir.join(format!("{id}.gt.btsr")), tensor_bytes(&scene.gt.to_tensor()))?;
        }
        outs.commit();
        println!("wrote {} scenes to {}", a.scenes, dir.display());
        return Ok(());
    }
    let out = a.out.as_ref().expect("required by clap");
    let mut img = if let Some(p) = &a.binary_map {
        let map = BinaryMap::from_tensor(&load_tensor(p)?).with_context(|| format!("reading {}", p.display()))?;
        visualize_binary_map(&map)?
    } else if let Some(p) = &a.labels {
        let labels = LabelMap::from_tensor(&load_tensor(p)?).with_context(|| format!("reading {}", p.display()))?;
        colorize_labels(&labels)
    } else {
        bail!("nothing to render: pass --binary-map, --labels or --make-fixture");
    };
    if let Some(like) = &a.like {
        let reference = load_image(like)?;
        img = upscale_nearest(&img, reference.height(), reference.width())?;
    }
    outs.write(out, image_bytes(&img))?;
    outs.commit();
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("thread count must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::TrainHash { features, out, cfg } => train_hash(features, out, &cfg.resolve()?),
        Command::Segment {
            image,
            features,
            model,
            out,
            binary_map_out,
            viz_dir,
            cfg,
        } => segment(
            image,
            features,
            model,
            out,
            binary_map_out.as_deref(),
            viz_dir.as_deref(),
            &cfg.resolve()?,
        ),
        Command::Baseline { image, method, out, cfg } => baseline(image, method, out, &cfg.resolve()?),
        Command::Eval {
            dataset,
            method,
            model,
            out_csv,
            out_json,
            cfg,
        } => eval(dataset, method, model.as_deref(), out_csv, out_json, &cfg.resolve()?),
        Command::Sweep {
            dataset,
            k_values,
            model,
            out,
            cfg,
        } => sweep(dataset, k_values, model.as_deref(), out, &cfg.resolve()?),
        Command::Viz(a) => viz(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
