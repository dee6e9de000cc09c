//! Fully connected two-label CRF with Gaussian pairwise kernels and
//! mean-field inference.

mod lattice;

pub use lattice::{permutohedral_filter, PermutohedralLattice};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, MotionProbMap, RgbImage, ScalarMap};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrfParams {
    pub w_app: f64,
    pub theta_alpha: f64,
    pub theta_beta: f64,
    pub w_smooth: f64,
    pub theta_gamma: f64,
    pub iterations: usize,
}

impl Default for CrfParams {
    fn default() -> Self {
        CrfParams {
            w_app: 4.0,
            theta_alpha: 49.0,
            theta_beta: 5.0,
            w_smooth: 3.0,
            theta_gamma: 3.0,
            iterations: 10,
        }
    }
}

impl CrfParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w_app", self.w_app), ("w_smooth", self.w_smooth)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("CRF {name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("theta_alpha", self.theta_alpha),
            ("theta_beta", self.theta_beta),
            ("theta_gamma", self.theta_gamma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("CRF {name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    Naive,
    Lattice,
}

/// Negative log-probabilities of the static and moving labels.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    pub h: usize,
    pub w: usize,
    pub static_cost: Vec<f64>,
    pub moving_cost: Vec<f64>,
}

pub const DEFAULT_UNARY_FLOOR: f64 = 1e-6;

pub fn make_unary(p: &MotionProbMap, floor: f64) -> Result<UnaryField> {
    if !(floor > 0.0 && floor < 0.5) {
        return Err(Error::invalid(format!("unary floor must lie in (0, 0.5), got {floor}")));
    }
    p.check_unit_range("motion probability")?;
    let (h, w) = p.dims();
    let clamped: Vec<f64> = p.as_slice().iter().map(|&v| (v as f64).clamp(floor, 1.0 - floor)).collect();
    Ok(UnaryField {
        h,
        w,
        static_cost: clamped.iter().map(|q| -(1.0 - q).ln()).collect(),
        moving_cost: clamped.iter().map(|q| -q.ln()).collect(),
    })
}

/// Exact `out_i = sum_{j != i} exp(-|f_i - f_j|^2 / 2) v_j` by the double loop.
pub fn gaussian_filter_naive<T: Scalar>(values: &[T], vd: usize, features: &[T], d: usize) -> Result<Vec<T>> {
    if d == 0 || features.len() % d != 0 {
        return Err(Error::shape("gaussian filter features", d, features.len()));
    }
    let n = features.len() / d;
    if values.len() != n * vd {
        return Err(Error::shape("gaussian filter values", (n, vd), values.len()));
    }
    let half = T::of(0.5);
    let mut out = vec![T::zero(); n * vd];
    for i in 0..n {
        let fi = &features[i * d..(i + 1) * d];
        let oi = &mut out[i * vd..(i + 1) * vd];
        for j in 0..n {
            if j == i {
                continue;
            }
            let fj = &features[j * d..(j + 1) * d];
            let dist: T = fi.iter().zip(fj).map(|(&a, &b)| (a - b) * (a - b)).sum();
            let k = (-dist * half).exp();
            for c in 0..vd {
                oi[c] += k * values[j * vd + c];
            }
        }
    }
    Ok(out)
}

/// `(x, y, r, g, b)` scaled by the appearance bandwidths.
pub fn bilateral_features<T: Scalar>(img: &RgbImage, theta_alpha: f64, theta_beta: f64) -> Vec<T> {
    let (h, w) = img.dims();
    let mut f = Vec::with_capacity(h * w * 5);
    for y in 0..h {
        for x in 0..w {
            let [r, g, b] = img.get(y, x);
            f.push(T::of(x as f64 / theta_alpha));
            f.push(T::of(y as f64 / theta_alpha));
            for c in [r, g, b] {
                f.push(T::of(c as f64 / theta_beta));
            }
        }
    }
    f
}

pub fn spatial_features<T: Scalar>(h: usize, w: usize, theta_gamma: f64) -> Vec<T> {
    let mut f = Vec::with_capacity(h * w * 2);
    for y in 0..h {
        for x in 0..w {
            f.push(T::of(x as f64 / theta_gamma));
            f.push(T::of(y as f64 / theta_gamma));
        }
    }
    f
}

enum Kernel<T> {
    Naive(Vec<T>, usize),
    Lattice(PermutohedralLattice),
}

impl<T: Scalar> Kernel<T> {
    fn new(features: Vec<T>, d: usize, mode: FilterMode) -> Result<Self> {
        Ok(match mode {
            FilterMode::Naive => Kernel::Naive(features, d),
            FilterMode::Lattice => Kernel::Lattice(PermutohedralLattice::new(&features, d)?),
        })
    }

    fn apply(&self, q: &[T]) -> Result<Vec<T>> {
        match self {
            Kernel::Naive(f, d) => gaussian_filter_naive(q, 2, f, *d),
            Kernel::Lattice(l) => l.filter(q, 2),
        }
    }
}

/// Mean-field marginals after every iteration, interleaved `[static, moving]`
/// per pixel. Entry 0 is the initial `softmax(-u)`.
pub fn mean_field_trace<T: Scalar>(
    u: &UnaryField,
    img: &RgbImage,
    params: &CrfParams,
    mode: FilterMode,
) -> Result<Vec<Vec<T>>> {
    params.validate()?;
    if img.dims() != (u.h, u.w) {
        return Err(Error::shape("mean_field", (u.h, u.w), img.dims()));
    }
    let n = u.h * u.w;
    let unary: Vec<[T; 2]> = (0..n).map(|i| [T::of(u.static_cost[i]), T::of(u.moving_cost[i])]).collect();
    let mut q = vec![T::zero(); 2 * n];
    let softmax = |q: &mut [T], i: usize, a: T, b: T| {
        let mx = a.max(b);
        let ea = (a - mx).exp();
        let eb = (b - mx).exp();
        q[2 * i] = ea / (ea + eb);
        q[2 * i + 1] = eb / (ea + eb);
    };
    for (i, un) in unary.iter().enumerate() {
        softmax(&mut q, i, -un[0], -un[1]);
    }
    let mut trace = vec![q.clone()];
    let pairwise = params.iterations > 0 && (params.w_app > 0.0 || params.w_smooth > 0.0);
    if !pairwise {
        trace.extend(std::iter::repeat_n(q, params.iterations));
        return Ok(trace);
    }
    let app = Kernel::new(bilateral_features(img, params.theta_alpha, params.theta_beta), 5, mode)?;
    let smooth = Kernel::new(spatial_features(u.h, u.w, params.theta_gamma), 2, mode)?;
    let (wa, ws) = (T::of(params.w_app), T::of(params.w_smooth));
    for _ in 0..params.iterations {
        let ma = app.apply(&q)?;
        let ms = smooth.apply(&q)?;
        for (i, un) in unary.iter().enumerate() {
            // Potts: label l pays the messages supporting the other label
            let m0 = wa * ma[2 * i] + ws * ms[2 * i];
            let m1 = wa * ma[2 * i + 1] + ws * ms[2 * i + 1];
            softmax(&mut q, i, -un[0] - m1, -un[1] - m0);
        }
        trace.push(q.clone());
    }
    Ok(trace)
}

/// Moving-label marginal after `params.iterations` mean-field updates.
pub fn mean_field(u: &UnaryField, img: &RgbImage, params: &CrfParams, mode: FilterMode) -> Result<MotionProbMap> {
    let q = mean_field_trace::<f64>(u, img, params, mode)?.pop().expect("trace holds the initial state");
    ScalarMap::from_vec(u.h, u.w, q.chunks(2).map(|c| c[1] as f32).collect())
}

/// `p > tau` is moving; ties are static.
pub fn binarize(p: &MotionProbMap, tau: f32) -> Result<BinaryMask> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {tau}")));
    }
    let (h, w) = p.dims();
    BinaryMask::from_vec(h, w, p.as_slice().iter().map(|&v| u8::from(v > tau)).collect())
}

#[cfg(test)]
mod tests;
