use mpnet_core::tensor::gradcheck::{op_suite, GradCheckConfig};
use proptest::prelude::*;

fn assert_suite<T: mpnet_core::Scalar, R: mpnet_core::Scalar>(seed: u64, cfg: &GradCheckConfig, tol: f64) {
    for c in op_suite::<T, R>(seed, cfg).unwrap() {
        assert!(c.report.passes(tol), "seed {seed} {}: {:?}", c.name, c.report);
    }
}

#[test]
fn single_precision_gradients_match_double_precision_differences() {
    assert_suite::<f32, f64>(0, &GradCheckConfig::f64().with_floor(1e-3), 1e-3);
}

#[test]
fn double_precision_check_mode() {
    assert_suite::<f64, f64>(0, &GradCheckConfig::f64(), 1e-4);
}

#[test]
fn all_single_precision_check() {
    assert_suite::<f32, f32>(0, &GradCheckConfig::f32(), 1e-2);
}

#[test]
fn suite_covers_every_layer() {
    let names: Vec<String> = op_suite::<f64, f64>(1, &GradCheckConfig::f64())
        .unwrap()
        .into_iter()
        .map(|c| c.name)
        .collect();
    for op in [
        "conv2d",
        "relu",
        "maxpool2x2",
        "upsample_bilinear",
        "concat_channels",
        "batchnorm(train)",
        "batchnorm(eval)",
        "softmax_xent",
    ] {
        assert!(names.iter().any(|n| n.starts_with(op)), "{op} missing from {names:?}");
    }
    assert!(names.iter().any(|n| n.ends_with("/weight")) && names.iter().any(|n| n.ends_with("/gamma")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradients_hold_across_seeds(seed in any::<u64>()) {
        for c in op_suite::<f32, f64>(seed, &GradCheckConfig::f64().with_floor(1e-3)).unwrap() {
            prop_assert!(c.report.passes(1e-3), "{}: {:?}", c.name, c.report);
        }
        for c in op_suite::<f64, f64>(seed, &GradCheckConfig::f64()).unwrap() {
            prop_assert!(c.report.passes(1e-4), "{}: {:?}", c.name, c.report);
        }
    }
}
