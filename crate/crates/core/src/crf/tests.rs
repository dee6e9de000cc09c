use super::*;
use crate::metrics::iou;
use crate::synth::{generate_scene, SceneConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> RgbImage {
    RgbImage::from_vec(h, w, (0..h * w * 3).map(|_| rng.random()).collect()).unwrap()
}

fn random_probs(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ScalarMap {
    ScalarMap::from_vec(h, w, (0..h * w).map(|_| rng.random()).collect()).unwrap()
}

#[test]
fn unary_examples() {
    let p = ScalarMap::from_vec(1, 3, vec![0.5, 1.0, 0.2]).unwrap();
    let u = make_unary(&p, 1e-6).unwrap();
    assert!((u.static_cost[0] - 2f64.ln()).abs() < 1e-12);
    assert!((u.moving_cost[0] - 2f64.ln()).abs() < 1e-12);
    assert!((u.moving_cost[1] - 1e-6).abs() < 1e-9);
    assert!((u.static_cost[1] - 13.8155).abs() < 1e-3);
    assert!(u.moving_cost[2] > u.moving_cost[0]);
    assert!(make_unary(&ScalarMap::from_vec(1, 1, vec![1.5]).unwrap(), 1e-6).is_err());
}

#[test]
fn naive_identical_and_distant_features() {
    let v = [1.0f64, 2.0, 3.0, 4.0];
    let out = gaussian_filter_naive(&v, 1, &[0.5; 4], 1).unwrap();
    assert_eq!(out, vec![9.0, 8.0, 7.0, 6.0]);
    let far = gaussian_filter_naive(&[1.0f64, 1.0], 1, &[0.0, 1e6], 1).unwrap();
    assert_eq!(far, vec![0.0, 0.0]);
}

#[test]
fn naive_matches_hand_expansion() {
    // 2x3 unit grid: squared distances 1, 2, 4, 5
    let f = [0.0f64, 0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0];
    let v = [0.3f64, -1.0, 2.0, 0.5, 1.5, -0.25];
    let g = |d2: f64| (-d2 / 2.0).exp();
    let expected = [
        g(1.0) * v[1] + g(4.0) * v[2] + g(1.0) * v[3] + g(2.0) * v[4] + g(5.0) * v[5],
        g(1.0) * v[0] + g(1.0) * v[2] + g(2.0) * v[3] + g(1.0) * v[4] + g(2.0) * v[5],
        g(4.0) * v[0] + g(1.0) * v[1] + g(5.0) * v[3] + g(2.0) * v[4] + g(1.0) * v[5],
        g(1.0) * v[0] + g(2.0) * v[1] + g(5.0) * v[2] + g(1.0) * v[4] + g(4.0) * v[5],
        g(2.0) * v[0] + g(1.0) * v[1] + g(2.0) * v[2] + g(1.0) * v[3] + g(1.0) * v[5],
        g(5.0) * v[0] + g(2.0) * v[1] + g(1.0) * v[2] + g(4.0) * v[3] + g(1.0) * v[4],
    ];
    let out = gaussian_filter_naive(&v, 1, &f, 2).unwrap();
    for (a, b) in out.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn naive_filter_is_mirror_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (h, w) = (6, 7);
    let img = random_image(h, w, &mut rng);
    let mut mirrored = RgbImage::new(h, w).unwrap();
    for y in 0..h {
        for x in 0..w {
            mirrored.put(y, w - 1 - x, img.get(y, x));
        }
    }
    let v: Vec<f64> = (0..h * w).map(|_| rng.random()).collect();
    let vm: Vec<f64> = (0..h * w).map(|i| v[(i / w) * w + (w - 1 - i % w)]).collect();
    let a = gaussian_filter_naive(&v, 1, &bilateral_features(&img, 3.0, 40.0), 5).unwrap();
    let b = gaussian_filter_naive(&vm, 1, &bilateral_features(&mirrored, 3.0, 40.0), 5).unwrap();
    for y in 0..h {
        for x in 0..w {
            assert!((a[y * w + x] - b[y * w + (w - 1 - x)]).abs() < 1e-6);
        }
    }
}

#[test]
fn lattice_rejects_empty_features() {
    assert!(PermutohedralLattice::new::<f64>(&[], 0).is_err());
    assert!(permutohedral_filter(&[1.0f64], 1, &[0.0], 0).is_err());
}

#[test]
fn lattice_constant_features_scale_total_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for d in [1usize, 2, 5] {
        let point: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let f: Vec<f64> = (0..20).flat_map(|_| point.clone()).collect();
        let v: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = v.iter().sum();
        let lat = PermutohedralLattice::new(&f, d).unwrap();
        let out = lat.filter(&v, 1).unwrap();
        let s = lat.self_weights()[0];
        assert!(s > 0.0);
        for (o, vi) in out.iter().zip(&v) {
            assert!((o - s * (total - vi)).abs() < 1e-9);
        }
    }
}

#[test]
fn lattice_self_term_is_removed() {
    let out = permutohedral_filter(&[1.0f64, 0.0], 1, &[0.0, 0.0, 50.0, 50.0], 2).unwrap();
    assert!(out[0].abs() < 1e-12 && out[1].abs() < 1e-12);
}

#[test]
fn lattice_tracks_dense_spatial_filtering() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (h, w) = (24, 24);
    let f: Vec<f64> = spatial_features(h, w, 3.0);
    let v: Vec<f64> = (0..h * w).map(|_| rng.random()).collect();
    let a = gaussian_filter_naive(&v, 1, &f, 2).unwrap();
    let b = permutohedral_filter(&v, 1, &f, 2).unwrap();
    let scale = a.iter().cloned().fold(0.0, f64::max);
    let dev = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(dev / scale < 0.05, "relative deviation {}", dev / scale);
}

#[test]
fn lattice_preserves_mass_on_dense_clouds() {
    // the Gaussian integrates to 2 pi in 2-d
    let s = 0.25;
    let n = 60;
    let f: Vec<f64> = (0..n * n).flat_map(|i| [(i % n) as f64 * s, (i / n) as f64 * s]).collect();
    let out = permutohedral_filter(&vec![s * s; n * n], 1, &f, 2).unwrap();
    let centre = (n / 2) * n + n / 2;
    let expected = 2.0 * std::f64::consts::PI - s * s;
    assert!((out[centre] - expected).abs() / expected < 0.01, "{} vs {expected}", out[centre]);
}

#[test]
fn zero_pairwise_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = random_image(8, 8, &mut rng);
    let p = random_probs(8, 8, &mut rng);
    let u = make_unary(&p, 1e-6).unwrap();
    for params in [
        CrfParams { w_app: 0.0, w_smooth: 0.0, ..Default::default() },
        CrfParams { iterations: 0, ..Default::default() },
    ] {
        for mode in [FilterMode::Naive, FilterMode::Lattice] {
            let q = mean_field(&u, &img, &params, mode).unwrap();
            assert_eq!(q, p);
        }
    }
}

#[test]
fn rejects_mismatched_sizes_and_bad_params() {
    let img = RgbImage::new(4, 4).unwrap();
    let u = make_unary(&ScalarMap::filled(4, 5, 0.5).unwrap(), 1e-6).unwrap();
    assert!(mean_field(&u, &img, &CrfParams::default(), FilterMode::Naive).is_err());
    let u = make_unary(&ScalarMap::filled(4, 4, 0.5).unwrap(), 1e-6).unwrap();
    let bad = CrfParams { theta_beta: 0.0, ..Default::default() };
    assert!(mean_field(&u, &img, &bad, FilterMode::Naive).is_err());
}

#[test]
fn binarize_rules() {
    let p = ScalarMap::filled(2, 2, 0.6).unwrap();
    assert_eq!(binarize(&p, 0.5).unwrap().count(), 4);
    assert_eq!(binarize(&ScalarMap::filled(2, 2, 0.5).unwrap(), 0.5).unwrap().count(), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = random_probs(9, 9, &mut rng);
    assert!(binarize(&r, 0.7).unwrap().is_subset_of(&binarize(&r, 0.3).unwrap()));
    assert!(binarize(&r, 1.0).is_err());
}

/// Scene whose motion map misses a band along every object boundary.
fn eroded_instance(seed: u64) -> (RgbImage, BinaryMask, ScalarMap) {
    let s = generate_scene(&SceneConfig::desk(), seed).unwrap();
    let gt = s.moving_mask.clone();
    let (h, w) = gt.dims();
    let r = 2usize;
    let inner = BinaryMask::from_fn(h, w, |y, x| {
        (y.saturating_sub(r)..=(y + r).min(h - 1))
            .all(|yy| (x.saturating_sub(r)..=(x + r).min(w - 1)).all(|xx| gt.get(yy, xx)))
    })
    .unwrap();
    let p = ScalarMap::from_vec(h, w, inner.as_slice().iter().map(|&v| if v != 0 { 0.85 } else { 0.3 }).collect())
        .unwrap();
    (s.rgb_t, gt, p)
}

#[test]
fn crf_recovers_eroded_boundaries() {
    let mut gain = 0.0;
    for seed in 0..6 {
        let (img, gt, p) = eroded_instance(seed);
        if gt.is_empty() {
            continue;
        }
        let before = iou(&binarize(&p, 0.5).unwrap(), &gt).unwrap();
        let u = make_unary(&p, DEFAULT_UNARY_FLOOR).unwrap();
        let q = mean_field(&u, &img, &CrfParams::default(), FilterMode::Lattice).unwrap();
        let after = iou(&binarize(&q, 0.5).unwrap(), &gt).unwrap();
        assert!(after >= before, "seed {seed}: {after} < {before}");
        gain += after - before;
    }
    assert!(gain > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn marginals_stay_normalised(seed in 0u64..10_000, naive in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (rng.random_range(2..12), rng.random_range(2..12));
        let img = random_image(h, w, &mut rng);
        let u = make_unary(&random_probs(h, w, &mut rng), 1e-6).unwrap();
        let mode = if naive { FilterMode::Naive } else { FilterMode::Lattice };
        for q in mean_field_trace::<f64>(&u, &img, &CrfParams::default(), mode).unwrap() {
            for c in q.chunks(2) {
                prop_assert!(c[0] >= 0.0 && c[1] >= 0.0);
                prop_assert!((c[0] + c[1] - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn lattice_is_linear_in_values(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 30;
        let f: Vec<f64> = (0..n * 3).map(|_| rng.random_range(0.0..4.0)).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - y).collect();
        let lat = PermutohedralLattice::new(&f, 3).unwrap();
        let (fa, fb, fab) = (lat.filter(&a, 1).unwrap(), lat.filter(&b, 1).unwrap(), lat.filter(&ab, 1).unwrap());
        for i in 0..n {
            prop_assert!((fab[i] - (2.0 * fa[i] - fb[i])).abs() < 1e-9);
        }
    }
}
