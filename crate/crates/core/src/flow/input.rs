use std::fmt;
use std::str::FromStr;

use super::{mirror_angle, normalize_zero_mean, to_angle_field, FlowField};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::tensor::{Shape, Tensor};

/// Network input encodings. Channel layouts:
///
/// | modality               | channels                         |
/// |------------------------|----------------------------------|
/// | `rgb_single`           | R, G, B of frame t               |
/// | `rgb_pair`             | RGB of frame t, then frame t+1   |
/// | `flow_vectors`         | u, v (zero-mean per frame)       |
/// | `angle_field`          | angle, scaled magnitude          |
/// | `rgb_plus_angle_field` | RGB of frame t, angle, magnitude |
///
/// RGB values are scaled to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    RgbSingle,
    RgbPair,
    FlowVectors,
    AngleField,
    RgbPlusAngleField,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::RgbSingle,
        Modality::RgbPair,
        Modality::FlowVectors,
        Modality::AngleField,
        Modality::RgbPlusAngleField,
    ];

    pub fn channels(self) -> usize {
        match self {
            Modality::RgbSingle => 3,
            Modality::RgbPair => 6,
            Modality::FlowVectors | Modality::AngleField => 2,
            Modality::RgbPlusAngleField => 5,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Modality::RgbSingle => "rgb_single",
            Modality::RgbPair => "rgb_pair",
            Modality::FlowVectors => "flow_vectors",
            Modality::AngleField => "angle_field",
            Modality::RgbPlusAngleField => "rgb_plus_angle_field",
        }
    }

    pub fn needs_flow(self) -> bool {
        matches!(self, Modality::FlowVectors | Modality::AngleField | Modality::RgbPlusAngleField)
    }

    /// Channel holding flow `u` (negated on mirroring).
    fn flow_u_channel(self) -> Option<usize> {
        (self == Modality::FlowVectors).then_some(0)
    }

    /// Channel holding the flow angle, paired with the next (magnitude) channel.
    fn angle_channel(self) -> Option<usize> {
        match self {
            Modality::AngleField => Some(0),
            Modality::RgbPlusAngleField => Some(3),
            _ => None,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::invalid(format!("unknown modality `{s}`")))
    }
}

/// One encoded sample, shape `(1, modality.channels(), h, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInput {
    pub modality: Modality,
    pub tensor: Tensor<f32>,
}

impl NetworkInput {
    pub fn new(modality: Modality, tensor: Tensor<f32>) -> Result<Self> {
        let s = tensor.shape();
        if s.n != 1 || s.c != modality.channels() {
            return Err(Error::shape(
                "NetworkInput channels",
                (modality.tag(), modality.channels()),
                s.dims(),
            ));
        }
        Ok(NetworkInput { modality, tensor })
    }

    pub fn dims(&self) -> (usize, usize) {
        let s = self.tensor.shape();
        (s.h, s.w)
    }

    /// Horizontal reflection consistent with the modality: columns reversed
    /// everywhere, flow `u` negated, flow angle mapped to `wrap(pi - angle)`.
    pub fn mirrored(&self) -> NetworkInput {
        let mut t = self.tensor.clone();
        let s = t.shape();
        for c in 0..s.c {
            for row in t.plane_mut(0, c).chunks_exact_mut(s.w) {
                row.reverse();
            }
        }
        if let Some(c) = self.modality.flow_u_channel() {
            for v in t.plane_mut(0, c) {
                *v = -*v;
            }
        }
        if let Some(c) = self.modality.angle_channel() {
            let mags = t.plane(0, c + 1).to_vec();
            for (a, m) in t.plane_mut(0, c).iter_mut().zip(mags) {
                if m > 0.0 {
                    *a = mirror_angle(*a);
                }
            }
        }
        NetworkInput {
            modality: self.modality,
            tensor: t,
        }
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<NetworkInput> {
        let s = self.tensor.shape();
        if y0 + h > s.h || x0 + w > s.w || h == 0 || w == 0 {
            return Err(Error::invalid(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds input {}x{}",
                s.h, s.w
            )));
        }
        let mut data = Vec::with_capacity(s.c * h * w);
        for c in 0..s.c {
            let plane = self.tensor.plane(0, c);
            for y in y0..y0 + h {
                data.extend_from_slice(&plane[y * s.w + x0..y * s.w + x0 + w]);
            }
        }
        NetworkInput::new(self.modality, Tensor::from_vec(Shape::new(1, s.c, h, w), data)?)
    }

    /// Replicates edge pixels so the input grows to `h x w` (bottom/right).
    pub fn pad_edge(&self, h: usize, w: usize) -> Result<NetworkInput> {
        let s = self.tensor.shape();
        if h < s.h || w < s.w {
            return Err(Error::invalid("pad_edge cannot shrink"));
        }
        let mut data = Vec::with_capacity(s.c * h * w);
        for c in 0..s.c {
            let plane = self.tensor.plane(0, c);
            for y in 0..h {
                let sy = y.min(s.h - 1);
                for x in 0..w {
                    data.push(plane[sy * s.w + x.min(s.w - 1)]);
                }
            }
        }
        NetworkInput::new(self.modality, Tensor::from_vec(Shape::new(1, s.c, h, w), data)?)
    }
}

fn push_rgb(out: &mut Vec<f32>, img: &RgbImage) {
    for ch in 0..3 {
        out.extend(img.as_bytes().chunks_exact(3).map(|px| px[ch] as f32 / 255.0));
    }
}

/// Assembles the channels of `modality` from whichever inputs it needs.
pub fn build_input(
    modality: Modality,
    rgb_t: Option<&RgbImage>,
    rgb_t1: Option<&RgbImage>,
    flow: Option<&FlowField>,
) -> Result<NetworkInput> {
    let need_rgb_t = modality != Modality::FlowVectors && modality != Modality::AngleField;
    let rgb_t = if need_rgb_t {
        Some(rgb_t.ok_or(Error::MissingInput("rgb_t"))?)
    } else {
        None
    };
    let rgb_t1 = if modality == Modality::RgbPair {
        Some(rgb_t1.ok_or(Error::MissingInput("rgb_t1"))?)
    } else {
        None
    };
    let flow = if modality.needs_flow() {
        Some(flow.ok_or(Error::MissingInput("flow"))?)
    } else {
        None
    };
    let dims = rgb_t
        .map(|i| i.dims())
        .or_else(|| flow.map(|f| f.dims()))
        .expect("every modality needs an input");
    for d in [rgb_t1.map(|i| i.dims()), flow.map(|f| f.dims())].into_iter().flatten() {
        if d != dims {
            return Err(Error::shape("build_input", dims, d));
        }
    }
    let (h, w) = dims;
    let mut data = Vec::with_capacity(modality.channels() * h * w);
    match modality {
        Modality::RgbSingle => push_rgb(&mut data, rgb_t.unwrap()),
        Modality::RgbPair => {
            push_rgb(&mut data, rgb_t.unwrap());
            push_rgb(&mut data, rgb_t1.unwrap());
        }
        Modality::FlowVectors => {
            let n = normalize_zero_mean(flow.unwrap());
            data.extend_from_slice(n.u());
            data.extend_from_slice(n.v());
        }
        Modality::AngleField => {
            let a = to_angle_field(flow.unwrap());
            data.extend_from_slice(a.angle());
            data.extend_from_slice(a.magnitude());
        }
        Modality::RgbPlusAngleField => {
            push_rgb(&mut data, rgb_t.unwrap());
            let a = to_angle_field(flow.unwrap());
            data.extend_from_slice(a.angle());
            data.extend_from_slice(a.magnitude());
        }
    }
    NetworkInput::new(modality, Tensor::from_vec(Shape::new(1, modality.channels(), h, w), data)?)
}
