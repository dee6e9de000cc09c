//! Optical-flow fields, their angle/magnitude encoding, and assembly of
//! the network input modalities.

mod input;

pub use input::{build_input, Modality, NetworkInput};

use std::f32::consts::PI;

use crate::error::{Error, Result};

/// `atan2` is undefined at the origin; flows shorter than this read as angle 0.
pub const MAGNITUDE_EPS: f32 = 1e-8;

/// Per-pixel displacement `(u, v)` in pixels from frame t to t+1.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    h: usize,
    w: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn new(h: usize, w: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if h == 0 || w == 0 || u.len() != h * w || v.len() != h * w {
            return Err(Error::shape("FlowField::new", (h, w), (u.len(), v.len())));
        }
        if let Some(i) = u.iter().chain(&v).position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("flow component {i}")));
        }
        Ok(FlowField { h, w, u, v })
    }

    pub fn zeros(h: usize, w: usize) -> Result<Self> {
        Self::new(h, w, vec![0.0; h * w], vec![0.0; h * w])
    }

    pub fn constant(h: usize, w: usize, u: f32, v: f32) -> Result<Self> {
        Self::new(h, w, vec![u; h * w], vec![v; h * w])
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (f32, f32) {
        let i = y * self.w + x;
        (self.u[i], self.v[i])
    }

    pub fn max_magnitude(&self) -> f32 {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| u.hypot(*v))
            .fold(0.0, f32::max)
    }

    /// Horizontal reflection: columns reversed and `u` negated.
    pub fn mirrored(&self) -> FlowField {
        let mut out = self.clone();
        for (ru, rv) in out.u.chunks_exact_mut(self.w).zip(out.v.chunks_exact_mut(self.w)) {
            ru.reverse();
            rv.reverse();
            for x in ru.iter_mut() {
                *x = -*x;
            }
        }
        out
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<FlowField> {
        if y0 + h > self.h || x0 + w > self.w {
            return Err(Error::invalid("crop exceeds flow field"));
        }
        let mut u = Vec::with_capacity(h * w);
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            let r = (y0 + y) * self.w + x0;
            u.extend_from_slice(&self.u[r..r + w]);
            v.extend_from_slice(&self.v[r..r + w]);
        }
        FlowField::new(h, w, u, v)
    }
}

/// Flow direction in `(-pi, pi]` and magnitude rescaled so the frame
/// maximum maps to `pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleField {
    h: usize,
    w: usize,
    angle: Vec<f32>,
    magnitude: Vec<f32>,
}

impl AngleField {
    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn angle(&self) -> &[f32] {
        &self.angle
    }

    pub fn magnitude(&self) -> &[f32] {
        &self.magnitude
    }

    /// Column reversal with `angle -> wrap(pi - angle)`; magnitudes unchanged.
    /// Zero-magnitude pixels keep the angle-0 convention.
    pub fn mirrored(&self) -> AngleField {
        let mut out = self.clone();
        for (ra, rm) in out.angle.chunks_exact_mut(self.w).zip(out.magnitude.chunks_exact_mut(self.w)) {
            ra.reverse();
            rm.reverse();
            for (a, &m) in ra.iter_mut().zip(rm.iter()) {
                if m > 0.0 {
                    *a = mirror_angle(*a);
                }
            }
        }
        out
    }
}

/// Maps any angle into `(-pi, pi]`.
pub fn wrap_angle(a: f32) -> f32 {
    let two_pi = 2.0 * PI;
    let mut r = a % two_pi;
    if r > PI {
        r -= two_pi;
    } else if r <= -PI {
        r += two_pi;
    }
    r
}

/// Direction of a horizontally reflected vector.
pub fn mirror_angle(a: f32) -> f32 {
    wrap_angle(PI - a)
}

/// Subtracts the per-frame mean of `u` and of `v`.
pub fn normalize_zero_mean(f: &FlowField) -> FlowField {
    let n = f.u.len() as f64;
    let mu = f.u.iter().map(|&x| x as f64).sum::<f64>() / n;
    let mv = f.v.iter().map(|&x| x as f64).sum::<f64>() / n;
    FlowField {
        h: f.h,
        w: f.w,
        u: f.u.iter().map(|&x| (x as f64 - mu) as f32).collect(),
        v: f.v.iter().map(|&x| (x as f64 - mv) as f32).collect(),
    }
}

pub fn to_angle_field(f: &FlowField) -> AngleField {
    let scale = PI / f.max_magnitude().max(MAGNITUDE_EPS);
    let mut angle = Vec::with_capacity(f.u.len());
    let mut magnitude = Vec::with_capacity(f.u.len());
    for (&u, &v) in f.u.iter().zip(&f.v) {
        let m = u.hypot(v);
        if m < MAGNITUDE_EPS {
            angle.push(0.0);
            magnitude.push(0.0);
            continue;
        }
        let a = v.atan2(u);
        // atan2 yields -pi for (negative u, -0.0 v); the half-open range excludes it
        angle.push(if a <= -PI { PI } else { a });
        magnitude.push((m * scale).min(PI));
    }
    AngleField {
        h: f.h,
        w: f.w,
        angle,
        magnitude,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(h: usize, w: usize, uv: &[(f32, f32)]) -> FlowField {
        FlowField::new(h, w, uv.iter().map(|p| p.0).collect(), uv.iter().map(|p| p.1).collect()).unwrap()
    }

    #[test]
    fn constant_flow_normalizes_to_zero() {
        let f = FlowField::constant(4, 5, 3.0, -1.0).unwrap();
        let n = normalize_zero_mean(&f);
        assert!(n.u().iter().chain(n.v()).all(|&x| x == 0.0));
    }

    #[test]
    fn angle_conventions() {
        let a = to_angle_field(&field(1, 3, &[(1.0, 0.0), (0.0, 1.0), (-1.0, -0.0)]));
        assert_eq!(a.angle()[0], 0.0);
        assert!((a.angle()[1] - PI / 2.0).abs() < 1e-7);
        assert_eq!(a.angle()[2], PI);
        let z = to_angle_field(&FlowField::zeros(3, 3).unwrap());
        assert!(z.angle().iter().chain(z.magnitude()).all(|&x| x == 0.0));
    }

    #[test]
    fn magnitude_scales_frame_max_to_pi() {
        let a = to_angle_field(&field(1, 2, &[(6.0, 8.0), (3.0, 4.0)]));
        assert!((a.magnitude()[0] - PI).abs() < 1e-6);
        assert!((a.magnitude()[1] - PI / 2.0).abs() < 1e-6);
    }

    #[test]
    fn mirror_of_rightward_is_leftward() {
        assert_eq!(mirror_angle(0.0), PI);
        assert_eq!(mirror_angle(PI), 0.0);
        assert!((mirror_angle(-PI / 2.0) + PI / 2.0).abs() < 1e-6);
        let f = field(1, 2, &[(2.0, 1.0), (0.0, 0.0)]);
        let m = f.mirrored();
        assert_eq!(m.at(0, 1), (-2.0, 1.0));
        assert_eq!(m.mirrored(), f);
    }

    fn arb_flow() -> impl Strategy<Value = FlowField> {
        (1usize..7, 1usize..7).prop_flat_map(|(h, w)| {
            (
                proptest::collection::vec(-20.0f32..20.0, h * w),
                proptest::collection::vec(-20.0f32..20.0, h * w),
            )
                .prop_map(move |(u, v)| FlowField::new(h, w, u, v).unwrap())
        })
    }

    fn angle_close(a: f32, b: f32, tol: f32) -> bool {
        let d = (a - b).abs();
        d < tol || (2.0 * PI - d) < tol
    }

    proptest! {
        #[test]
        fn zero_mean_output_and_idempotence(f in arb_flow()) {
            let n = normalize_zero_mean(&f);
            let len = n.u().len() as f64;
            let mu = n.u().iter().map(|&x| x as f64).sum::<f64>() / len;
            let mv = n.v().iter().map(|&x| x as f64).sum::<f64>() / len;
            prop_assert!(mu.abs() < 1e-5 && mv.abs() < 1e-5);
            let n2 = normalize_zero_mean(&n);
            for (a, b) in n.u().iter().chain(n.v()).zip(n2.u().iter().chain(n2.v())) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }

        #[test]
        fn angles_reconstruct_directions(f in arb_flow()) {
            let a = to_angle_field(&f);
            let max = a.magnitude().iter().cloned().fold(0.0f32, f32::max);
            prop_assert!(max <= PI + 1e-6);
            for i in 0..f.u().len() {
                let (u, v) = (f.u()[i], f.v()[i]);
                let m = u.hypot(v);
                prop_assert!(a.angle()[i] > -PI && a.angle()[i] <= PI);
                if m > 1e-6 {
                    prop_assert!((a.angle()[i].cos() - u / m).abs() < 1e-5);
                    prop_assert!((a.angle()[i].sin() - v / m).abs() < 1e-5);
                }
            }
        }

        #[test]
        fn angle_field_is_mirror_equivariant(f in arb_flow()) {
            let lhs = to_angle_field(&f.mirrored());
            let rhs = to_angle_field(&f).mirrored();
            for i in 0..lhs.angle().len() {
                prop_assert!(angle_close(lhs.angle()[i], rhs.angle()[i], 1e-5),
                    "{} vs {}", lhs.angle()[i], rhs.angle()[i]);
                prop_assert_eq!(lhs.magnitude()[i], rhs.magnitude()[i]);
            }
        }
    }
}
