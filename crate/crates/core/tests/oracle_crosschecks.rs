use binseg_core::binmap::{encode_feature_map, superpixel_codes, BinaryMap};
use binseg_core::egs::gaussian_smooth;
use binseg_core::fixtures::{four_clusters, random_image, random_label_map};
use binseg_core::itq::{fit_pca_with, train_hash_with, PcaSolver, TrainOptions};
use binseg_core::linalg::symmetric_eigen;
use binseg_core::superpixel::{build_adjacency, enforce_connectivity, SuperpixelSet};
use binseg_core::tensor_io::{LabelMap, Tensor3};
use binseg_oracles as oracle;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

#[test]
fn jacobi_matches_dense_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [1, 2, 3, 7, 16, 32] {
        let a = gaussian_matrix(&mut rng, n, n);
        let s = &a + a.transpose();
        let ours = symmetric_eigen(&s);
        let (values, vectors) = oracle::dense_eig(&s);
        for i in 0..n {
            assert!((ours.values[i] - values[i]).abs() < 1e-9 * (1.0 + values[i].abs()), "n={n}");
            // vectors agree up to sign
            let dot: f64 = ours.vectors.column(i).dot(&vectors.column(i));
            assert!((dot.abs() - 1.0).abs() < 1e-8, "n={n} i={i} dot={dot}");
        }
    }
}

#[test]
fn smoothing_matches_dense_convolution() {
    let mut impulse = vec![0f32; 81];
    impulse[40] = 1.0;
    let t = Tensor3::from_f32(9, 9, 1, impulse.clone()).unwrap();
    let ours = gaussian_smooth(&t, 1.0).unwrap();
    let want = oracle::naive_conv2d(&impulse.iter().map(|&v| v as f64).collect::<Vec<_>>(), 9, 9, 1, 1.0);
    assert!((ours.as_f32().unwrap()[40] as f64 - want[40]).abs() < 1e-6);

    for (seed, sigma) in [(0, 0.5), (1, 1.0), (2, 2.3)] {
        let img = random_image(11, 13, seed);
        let f: Vec<f32> = img.as_u8().unwrap().iter().map(|&v| v as f32).collect();
        let t = Tensor3::from_f32(11, 13, 3, f.clone()).unwrap();
        let ours = gaussian_smooth(&t, sigma).unwrap();
        let want = oracle::naive_conv2d(&f.iter().map(|&v| v as f64).collect::<Vec<_>>(), 11, 13, 3, sigma);
        for (a, b) in ours.as_f32().unwrap().iter().zip(&want) {
            assert!((*a as f64 - b).abs() < 1e-3, "sigma={sigma}: {a} vs {b}");
        }
    }
}

#[test]
fn adjacency_and_connectivity_match_brute_force() {
    for seed in 0..50 {
        let m = random_label_map(9, 7, 4, seed);
        assert_eq!(build_adjacency(&m), oracle::brute_adjacency(m.labels(), 9, 7));
        let set = enforce_connectivity(&SuperpixelSet::from_labels(m), 3);
        assert!(oracle::labels_are_connected(set.labels.labels(), 9, 7), "seed {seed}");
        assert!(set.sizes().iter().all(|&s| s >= 3) || set.count == 1);
    }
}

#[test]
fn low_rank_high_dim_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let basis = gaussian_matrix(&mut rng, 8, 4096);
    let coeffs = gaussian_matrix(&mut rng, 120, 8);
    let x = coeffs * basis;
    let t = train_hash_with(&x, &TrainOptions::new(8)).unwrap();
    assert!(t.loss_history.windows(2).all(|w| w[1] <= w[0] + 1e-9));

    // a d=64 slice solved both ways
    let slice = x.columns(0, 64).into_owned();
    let gram = fit_pca_with(&slice.rows(0, 40).into_owned(), 8, PcaSolver::Gram).unwrap();
    let direct = fit_pca_with(&slice.rows(0, 40).into_owned(), 8, PcaSolver::Covariance).unwrap();
    assert!((&gram.projection - &direct.projection).abs().max() < 1e-6);
}

#[test]
fn cluster_centroids_encode_to_majority() {
    let (x, labels) = four_clusters(400, 0);
    let model = train_hash_with(&x, &TrainOptions::new(2)).unwrap().model;
    for k in 0..4 {
        let rows: Vec<usize> = (0..400).filter(|&i| labels[i] == k).collect();
        let centroid: Vec<f32> = (0..2)
            .map(|j| (rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / rows.len() as f64) as f32)
            .collect();
        let c = model.encode(&centroid).unwrap();
        let same = rows
            .iter()
            .filter(|&&i| model.encode(&[x[(i, 0)] as f32, x[(i, 1)] as f32]).unwrap() == c)
            .count();
        assert!(same * 2 > rows.len());
    }
}

#[test]
fn binary_map_of_two_halves() {
    let (x, labels) = four_clusters(400, 0);
    let model = train_hash_with(&x, &TrainOptions::new(2)).unwrap().model;
    let a = labels.iter().position(|&l| l == 0).unwrap();
    let b = labels.iter().position(|&l| l == 2).unwrap();
    let (h, w) = (4, 6);
    let mut f = Vec::new();
    for _ in 0..h {
        for c in 0..w {
            let src = if c < w / 2 { a } else { b };
            f.extend([x[(src, 0)] as f32, x[(src, 1)] as f32]);
        }
    }
    let map = encode_feature_map(&model, &Tensor3::from_f32(h, w, 2, f).unwrap()).unwrap();
    let left = map.code(0, 0);
    let right = map.code(0, w - 1);
    assert_ne!(left, right);
    for r in 0..h {
        for c in 0..w {
            assert_eq!(map.code(r, c), if c < w / 2 { left } else { right });
        }
    }
    // majority codes of pixel-level halves follow the split
    let px = LabelMap::new(8, 12, (0..96).map(|i| ((i % 12) >= 6) as u32).collect()).unwrap();
    let codes = superpixel_codes(&map, &SuperpixelSet::from_labels(px));
    assert_eq!(codes, vec![left, right]);
    assert_eq!(BinaryMap::from_tensor(&map.to_tensor()).unwrap(), map);
}
