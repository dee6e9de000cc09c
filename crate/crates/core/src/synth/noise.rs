use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::flow::FlowField;

/// Corruption applied to ground-truth flow to imitate an estimated flow:
/// smoothing across motion boundaries, smooth low-frequency error and a
/// few blobs of wrong flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNoiseConfig {
    /// Gaussian blur in pixels.
    pub blur_sigma: f64,
    /// Standard deviation (pixels) of the smooth additive error.
    pub smooth_noise: f64,
    pub outliers: (usize, usize),
    pub outlier_radius_px: (f64, f64),
    /// Outlier flow length relative to the frame's largest flow.
    pub outlier_magnitude: (f64, f64),
}

impl Default for FlowNoiseConfig {
    fn default() -> Self {
        FlowNoiseConfig {
            blur_sigma: 1.5,
            smooth_noise: 0.15,
            outliers: (1, 3),
            outlier_radius_px: (4.0, 9.0),
            outlier_magnitude: (0.6, 1.2),
        }
    }
}

impl FlowNoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.blur_sigma >= 0.0
            && self.smooth_noise >= 0.0
            && self.outliers.0 <= self.outliers.1
            && self.outlier_radius_px.0 > 0.0
            && self.outlier_radius_px.0 <= self.outlier_radius_px.1
            && self.outlier_magnitude.0 >= 0.0
            && self.outlier_magnitude.0 <= self.outlier_magnitude.1;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid flow noise settings {self:?}")))
        }
    }
}

fn gaussian_blur(data: &[f32], h: usize, w: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let pass = |src: &[f32], horizontal: bool| -> Vec<f32> {
        let mut out = vec![0.0f32; h * w];
        for y in 0..h {
            for x in 0..w {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (ki, &kv) in k.iter().enumerate() {
                    let o = ki as isize - r;
                    let (yy, xx) = if horizontal { (y as isize, x as isize + o) } else { (y as isize + o, x as isize) };
                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        continue;
                    }
                    acc += kv * src[yy as usize * w + xx as usize] as f64;
                    norm += kv;
                }
                out[y * w + x] = (acc / norm) as f32;
            }
        }
        out
    };
    pass(&pass(data, true), false)
}

/// Random smooth field: a few low-frequency sinusoids with unit total variance.
fn smooth_field<R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> Vec<f32> {
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            let period = rng.random_range(16.0..48.0);
            let dir = rng.random_range(0.0..PI);
            let k = 2.0 * PI / period;
            (k * dir.cos(), k * dir.sin(), rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let scale = (2.0 / waves.len() as f64).sqrt();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = waves.iter().map(|(kx, ky, ph)| (kx * x as f64 + ky * y as f64 + ph).sin()).sum();
            out.push((s * scale) as f32);
        }
    }
    out
}

/// Corrupted copy of `flow`; deterministic in the generator state.
pub fn corrupt_flow<R: Rng + ?Sized>(flow: &FlowField, cfg: &FlowNoiseConfig, rng: &mut R) -> Result<FlowField> {
    cfg.validate()?;
    let (h, w) = flow.dims();
    let mut u = gaussian_blur(flow.u(), h, w, cfg.blur_sigma);
    let mut v = gaussian_blur(flow.v(), h, w, cfg.blur_sigma);
    if cfg.smooth_noise > 0.0 {
        let nu = smooth_field(h, w, rng);
        let nv = smooth_field(h, w, rng);
        let s = cfg.smooth_noise as f32;
        for i in 0..h * w {
            u[i] += s * nu[i];
            v[i] += s * nv[i];
        }
    }
    let max = flow.max_magnitude().max(0.5) as f64;
    let n = rng.random_range(cfg.outliers.0..=cfg.outliers.1);
    let jitter = Normal::new(0.0, 0.15).expect("valid std");
    for _ in 0..n {
        let r = rng.random_range(cfg.outlier_radius_px.0..=cfg.outlier_radius_px.1);
        let (cy, cx) = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
        let aspect = rng.random_range(0.6..1.6);
        let mag = max * rng.random_range(cfg.outlier_magnitude.0..=cfg.outlier_magnitude.1);
        let ang = rng.random_range(-PI..PI);
        let (bu, bv) = (mag * ang.cos(), mag * ang.sin());
        for y in 0..h {
            for x in 0..w {
                let dy = (y as f64 - cy) / (r * aspect);
                let dx = (x as f64 - cx) / r;
                let d2 = dx * dx + dy * dy;
                if d2 >= 1.0 {
                    continue;
                }
                // soft edge: full replacement in the core, blended outside
                let a = ((1.0 - d2) * 2.0).min(1.0) as f32;
                let i = y * w + x;
                let eu = (bu * (1.0 + jitter.sample(rng))) as f32;
                let ev = (bv * (1.0 + jitter.sample(rng))) as f32;
                u[i] = (1.0 - a) * u[i] + a * eu;
                v[i] = (1.0 - a) * v[i] + a * ev;
            }
        }
    }
    FlowField::new(h, w, u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blur_preserves_constants() {
        let d = vec![2.5f32; 30];
        assert!(gaussian_blur(&d, 5, 6, 1.5).iter().all(|v| (v - 2.5).abs() < 1e-6));
    }

    #[test]
    fn noise_is_deterministic_and_bounded() {
        let f = FlowField::constant(32, 32, 1.0, -0.5).unwrap();
        let cfg = FlowNoiseConfig::default();
        let a = corrupt_flow(&f, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = corrupt_flow(&f, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, f);
        assert!(a.max_magnitude() < 5.0);
        let clean = FlowNoiseConfig {
            blur_sigma: 0.0,
            smooth_noise: 0.0,
            outliers: (0, 0),
            ..cfg
        };
        assert_eq!(corrupt_flow(&f, &clean, &mut ChaCha8Rng::seed_from_u64(1)).unwrap(), f);
    }
}
