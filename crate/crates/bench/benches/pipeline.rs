use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;

use binseg_core::binmap::encode_feature_map;
use binseg_core::egs::{egs_segment, EgsParams};
use binseg_core::fixtures::make_scene;
use binseg_core::itq::{train_hash_with, TrainOptions};
use binseg_core::pipeline::{segment_image, train_from_features, PipelineConfig};
use binseg_core::superpixel::{slic_with, SlicParams};

fn feature_rows(scene: &binseg_core::fixtures::SyntheticScene) -> DMatrix<f64> {
    let f = &scene.features;
    let d = f.channels();
    let v = f.as_f32().unwrap();
    DMatrix::from_fn(f.pixel_count(), d, |r, c| v[r * d + c] as f64)
}

fn stages(c: &mut Criterion) {
    let scene = make_scene(14, 22, 16, 64, 3, 0);
    let cfg = PipelineConfig {
        superpixel_k: 100,
        ..Default::default()
    };
    let model = train_from_features(&[&scene.features], &cfg).unwrap().model;
    let x = feature_rows(&scene);

    let mut g = c.benchmark_group("stages");
    g.sample_size(20);
    g.bench_function("slic_224x352_k100", |b| {
        b.iter(|| slic_with(black_box(&scene.image), &SlicParams::new(100)).unwrap())
    });
    g.bench_function("egs_224x352", |b| {
        b.iter(|| egs_segment(black_box(&scene.image), &EgsParams::default()).unwrap())
    });
    g.bench_function("itq_train_308x64_b8", |b| {
        b.iter(|| train_hash_with(black_box(&x), &TrainOptions::new(8)).unwrap())
    });
    g.bench_function("encode_14x22x64", |b| {
        b.iter(|| encode_feature_map(&model, black_box(&scene.features)).unwrap())
    });
    g.bench_function("segment_image", |b| {
        b.iter(|| segment_image(&scene.image, &scene.features, &model, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
