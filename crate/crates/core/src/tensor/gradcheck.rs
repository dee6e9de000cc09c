//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    batchnorm_backward, batchnorm_eval, batchnorm_eval_backward, batchnorm_train, concat_channels,
    concat_channels_backward, conv2d, conv2d_backward, maxpool2x2, maxpool2x2_backward, relu, relu_backward,
    softmax_xent, upsample_bilinear, upsample_bilinear_backward, BatchNormParams, ConvParams, RunningStats, Shape,
    Tensor,
};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Perturbation applied to each checked coordinate.
    pub step: f64,
    /// Coordinates checked; all of them when the input is smaller.
    pub samples: usize,
    pub seed: u64,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// true gradient is ~0 are judged on absolute error.
    pub floor: f64,
}

impl GradCheckConfig {
    pub fn f32() -> Self {
        GradCheckConfig {
            step: 1e-2,
            samples: 64,
            seed: 0,
            floor: 1e-2,
        }
    }

    pub fn f64() -> Self {
        GradCheckConfig {
            step: 1e-6,
            samples: 64,
            seed: 0,
            floor: 1e-6,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(coordinate, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` with central differences of the scalar function `f`
/// at `x`, on a random subset of coordinates.
pub fn grad_check<T: Scalar>(
    mut f: impl FnMut(&[T]) -> f64,
    x: &[T],
    analytic: &[T],
    cfg: &GradCheckConfig,
) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len(), "grad_check: gradient length differs from input");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let coords: Vec<usize> = if x.len() <= cfg.samples {
        (0..x.len()).collect()
    } else {
        let mut c = sample(&mut rng, x.len(), cfg.samples).into_vec();
        c.sort_unstable();
        c
    };
    let mut probe = x.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for &i in &coords {
        let orig = x[i];
        let hi = orig + T::of(cfg.step);
        let lo = orig - T::of(cfg.step);
        probe[i] = hi;
        let f_hi = f(&probe);
        probe[i] = lo;
        let f_lo = f(&probe);
        probe[i] = orig;
        // divide by the representable step, not the requested one
        let numeric = (f_hi - f_lo) / (hi.as_f64() - lo.as_f64());
        let a = analytic[i].as_f64();
        let err = relative_error(a, numeric, cfg.floor);
        report.checked += 1;
        if err >= report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = err;
            report.worst = Some((i, a, numeric));
        }
    }
    report
}

/// Fixed random projection used to turn a tensor-valued op into a scalar.
pub fn projection<T: Scalar>(like: &Tensor<T>, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    Tensor::random_uniform(like.shape(), -1.0, 1.0, &mut rng).expect("shape already validated")
}

pub fn dot<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x.as_f64() * y.as_f64()).sum()
}

/// Checks the input gradient of a tensor op through `L(x) = <forward(x), r>`
/// with a random `r`; `backward(x, dy)` must return `dL/dx`.
pub fn check_op<T: Scalar>(
    forward: impl Fn(&Tensor<T>) -> Tensor<T>,
    backward: impl Fn(&Tensor<T>, &Tensor<T>) -> Tensor<T>,
    x: &Tensor<T>,
    cfg: &GradCheckConfig,
) -> GradCheckReport {
    let y = forward(x);
    let r = projection(&y, cfg.seed);
    let analytic = backward(x, &r);
    let shape = x.shape();
    grad_check(
        |d| {
            let probe = Tensor::from_vec(shape, d.to_vec()).expect("same shape");
            dot(&forward(&probe), &r)
        },
        x.data(),
        analytic.data(),
        cfg,
    )
}

/// Result of one gradient check in [`op_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    /// `op/argument`, e.g. `conv2d(s2,p0)/weight`.
    pub name: String,
    pub report: GradCheckReport,
}

fn checked(name: impl Into<String>, report: GradCheckReport) -> OpCheck {
    OpCheck {
        name: name.into(),
        report,
    }
}

fn cast_vec<T: Scalar, R: Scalar>(v: &[T]) -> Vec<R> {
    v.iter().map(|x| R::of(x.as_f64())).collect()
}

fn cast_conv<T: Scalar, R: Scalar>(p: &ConvParams<T>) -> ConvParams<R> {
    ConvParams {
        weight: p.weight.cast(),
        bias: cast_vec(&p.bias),
    }
}

fn cast_bn<T: Scalar, R: Scalar>(p: &BatchNormParams<T>) -> BatchNormParams<R> {
    BatchNormParams {
        gamma: cast_vec(&p.gamma),
        beta: cast_vec(&p.beta),
        running: p.running.as_ref().map(|r| RunningStats {
            mean: cast_vec(&r.mean),
            var: cast_vec(&r.var),
        }),
        momentum: R::of(p.momentum.as_f64()),
        eps: R::of(p.eps.as_f64()),
    }
}

/// `<forward(w), r>` differenced in `R` against an analytic gradient from `T`.
fn fd_check<T: Scalar, R: Scalar>(
    name: impl Into<String>,
    base: &[T],
    analytic: &[T],
    forward: impl Fn(&[R]) -> Tensor<R>,
    r: &Tensor<T>,
    cfg: &GradCheckConfig,
) -> OpCheck {
    let r: Tensor<R> = r.cast();
    checked(
        name,
        grad_check(|d| dot(&forward(d), &r), &cast_vec::<T, R>(base), &cast_vec::<T, R>(analytic), cfg),
    )
}

/// Values spread at least `gap` apart, so perturbations never reorder them.
fn spread<T: Scalar, G: Rng>(shape: Shape, gap: f64, rng: &mut G) -> Result<Tensor<T>> {
    let mut v: Vec<T> = (0..shape.len()).map(|i| T::of(gap * (i as f64 - shape.len() as f64 / 2.0))).collect();
    v.shuffle(rng);
    Tensor::from_vec(shape, v)
}

fn rebuild<R: Scalar>(shape: Shape, d: &[R]) -> Tensor<R> {
    Tensor::from_vec(shape, d.to_vec()).expect("same shape")
}

/// Finite-difference checks of every differentiable layer, w.r.t. inputs
/// and parameters, on random data drawn from `seed`.
///
/// Analytic gradients are computed in `T`; the central differences of the
/// forward pass are taken in `R` on the same (`T`-rounded) inputs, with the
/// step and coordinate sampling of `cfg`.
pub fn op_suite<T: Scalar, R: Scalar>(seed: u64, cfg: &GradCheckConfig) -> Result<Vec<OpCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = cfg.with_seed(seed);
    let mut out = Vec::new();

    for (stride, pad) in [(1, 1), (2, 0)] {
        let tag = format!("conv2d(s{stride},p{pad})");
        let x = Tensor::<T>::random_uniform(Shape::new(2, 3, 6, 6), -1.0, 1.0, &mut rng)?;
        let mut p = ConvParams::<T>::xavier(4, 3, 3, &mut rng)?;
        p.bias = (0..4).map(|_| T::of(rng.random_range(-0.5..0.5))).collect();
        let y = conv2d(&x, &p, stride, pad)?;
        let r = projection(&y, seed);
        let g = conv2d_backward(&x, &p, stride, pad, &r)?;
        let (xr, pr) = (x.cast::<R>(), cast_conv::<T, R>(&p));
        let (xs, ws) = (x.shape(), p.weight.shape());
        out.push(fd_check(
            format!("{tag}/input"),
            x.data(),
            g.input.data(),
            |d| conv2d(&rebuild(xs, d), &pr, stride, pad).expect("valid"),
            &r,
            &cfg,
        ));
        out.push(fd_check(
            format!("{tag}/weight"),
            p.weight.data(),
            g.weight.data(),
            |d| {
                let q = ConvParams {
                    weight: rebuild(ws, d),
                    bias: pr.bias.clone(),
                };
                conv2d(&xr, &q, stride, pad).expect("valid")
            },
            &r,
            &cfg,
        ));
        out.push(fd_check(
            format!("{tag}/bias"),
            &p.bias,
            &g.bias,
            |d| {
                let q = ConvParams {
                    weight: pr.weight.clone(),
                    bias: d.to_vec(),
                };
                conv2d(&xr, &q, stride, pad).expect("valid")
            },
            &r,
            &cfg,
        ));
    }

    // keep relu inputs away from the kink
    let x = Tensor::<T>::random_uniform(Shape::new(2, 2, 5, 5), -1.0, 1.0, &mut rng)?
        .map(|v| v + T::of(0.1).copysign(v));
    let r = projection(&x, seed);
    let g = relu_backward(&x, &r)?;
    out.push(fd_check("relu/input", x.data(), g.data(), |d: &[R]| relu(&rebuild(x.shape(), d)), &r, &cfg));

    let x = spread::<T, _>(Shape::new(2, 2, 6, 8), 0.05, &mut rng)?;
    let (y, idx) = maxpool2x2(&x)?;
    let r = projection(&y, seed);
    let g = maxpool2x2_backward(&idx, &r)?;
    out.push(fd_check(
        "maxpool2x2/input",
        x.data(),
        g.data(),
        |d: &[R]| maxpool2x2(&rebuild(x.shape(), d)).expect("even dims").0,
        &r,
        &cfg,
    ));

    for (oh, ow) in [(6, 8), (7, 11)] {
        let x = Tensor::<T>::random_uniform(Shape::new(2, 2, 3, 4), -1.0, 1.0, &mut rng)?;
        let r = projection(&upsample_bilinear(&x, oh, ow)?, seed);
        let g = upsample_bilinear_backward(x.shape(), &r)?;
        out.push(fd_check(
            format!("upsample_bilinear({oh}x{ow})/input"),
            x.data(),
            g.data(),
            |d: &[R]| upsample_bilinear(&rebuild(x.shape(), d), oh, ow).expect("upscale"),
            &r,
            &cfg,
        ));
    }

    let a = Tensor::<T>::random_uniform(Shape::new(2, 2, 4, 4), -1.0, 1.0, &mut rng)?;
    let b = Tensor::<T>::random_uniform(Shape::new(2, 3, 4, 4), -1.0, 1.0, &mut rng)?;
    let r = projection(&concat_channels(&a, &b)?, seed);
    let (da, db) = concat_channels_backward(&r, 2)?;
    let (ar, br) = (a.cast::<R>(), b.cast::<R>());
    out.push(fd_check(
        "concat_channels/first",
        a.data(),
        da.data(),
        |d| concat_channels(&rebuild(a.shape(), d), &br).expect("same extent"),
        &r,
        &cfg,
    ));
    out.push(fd_check(
        "concat_channels/second",
        b.data(),
        db.data(),
        |d| concat_channels(&ar, &rebuild(b.shape(), d)).expect("same extent"),
        &r,
        &cfg,
    ));

    let x = Tensor::<T>::random_uniform(Shape::new(2, 3, 4, 4), -2.0, 2.0, &mut rng)?;
    let mut p = BatchNormParams::<T>::new(3);
    p.gamma = (0..3).map(|_| T::of(rng.random_range(0.5..1.5))).collect();
    p.beta = (0..3).map(|_| T::of(rng.random_range(-0.5..0.5))).collect();
    let (y, cache, _) = batchnorm_train(&x, &p)?;
    let r = projection(&y, seed);
    let g = batchnorm_backward(&cache, &p, &r)?;
    let (xr, pr) = (x.cast::<R>(), cast_bn::<T, R>(&p));
    out.push(fd_check(
        "batchnorm(train)/input",
        x.data(),
        g.input.data(),
        |d| batchnorm_train(&rebuild(x.shape(), d), &pr).expect("valid").0,
        &r,
        &cfg,
    ));
    out.push(fd_check(
        "batchnorm(train)/gamma",
        &p.gamma,
        &g.gamma,
        |d| {
            let q = BatchNormParams { gamma: d.to_vec(), ..pr.clone() };
            batchnorm_train(&xr, &q).expect("valid").0
        },
        &r,
        &cfg,
    ));
    out.push(fd_check(
        "batchnorm(train)/beta",
        &p.beta,
        &g.beta,
        |d| {
            let q = BatchNormParams { beta: d.to_vec(), ..pr.clone() };
            batchnorm_train(&xr, &q).expect("valid").0
        },
        &r,
        &cfg,
    ));
    p.running = Some(RunningStats {
        mean: (0..3).map(|_| T::of(rng.random_range(-0.5..0.5))).collect(),
        var: (0..3).map(|_| T::of(rng.random_range(0.5..2.0))).collect(),
    });
    let pr = cast_bn::<T, R>(&p);
    let r = projection(&batchnorm_eval(&x, &p)?, seed);
    let g = batchnorm_eval_backward(&p, &r)?;
    out.push(fd_check(
        "batchnorm(eval)/input",
        x.data(),
        g.data(),
        |d| batchnorm_eval(&rebuild(x.shape(), d), &pr).expect("valid"),
        &r,
        &cfg,
    ));

    let logits = Tensor::<T>::random_uniform(Shape::new(2, 2, 4, 5), -3.0, 3.0, &mut rng)?;
    let targets: Vec<u8> = (0..40).map(|_| rng.random_range(0..2u8)).collect();
    let ignore: Vec<u8> = (0..40).map(|_| u8::from(rng.random_bool(0.2))).collect();
    let (_, g) = softmax_xent(&logits, &targets, Some(&ignore))?;
    out.push(checked(
        "softmax_xent/logits",
        grad_check(
            |d: &[R]| {
                softmax_xent(&rebuild(logits.shape(), d), &targets, Some(&ignore))
                    .expect("valid")
                    .0
                    .as_f64()
            },
            &cast_vec::<T, R>(logits.data()),
            &cast_vec::<T, R>(g.data()),
            &cfg,
        ),
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_gradient_of_quadratic() {
        let x = [1.0f64, -2.0, 0.5];
        let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let r = grad_check(|d| d.iter().map(|v| v * v).sum(), &x, &g, &GradCheckConfig::f64());
        assert_eq!(r.checked, 3);
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let x = [1.0f64, 2.0];
        let r = grad_check(|d| d[0] * d[1], &x, &[2.0, 2.0], &GradCheckConfig::f64());
        assert!(!r.passes(1e-3));
        assert_eq!(r.worst.unwrap().0, 1);
    }
}
