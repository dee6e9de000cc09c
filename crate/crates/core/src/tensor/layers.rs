use super::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `dy` where the forward input was strictly positive (subgradient 0 at 0).
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != dy.shape() {
        return Err(Error::shape("relu_backward", x.shape().dims(), dy.shape().dims()));
    }
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Flat input index of the winning element of every pooling window.
#[derive(Debug, Clone)]
pub struct PoolIndices {
    input: Shape,
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn as_slice(&self) -> &[usize] {
        &self.argmax
    }
}

/// Non-overlapping 2x2 max pooling with stride 2. Ties go to the first
/// maximum in row-major window order.
pub fn maxpool2x2<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let s = x.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::invalid(format!(
            "maxpool2x2 requires even spatial dims, got {}x{}",
            s.h, s.w
        )));
    }
    let (oh, ow) = (s.h / 2, s.w / 2);
    let out_shape = Shape::new(s.n, s.c, oh, ow);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut argmax = Vec::with_capacity(out_shape.len());
    let xd = x.data();
    for n in 0..s.n {
        for c in 0..s.c {
            let base = (n * s.c + c) * s.h * s.w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let top = base + 2 * oy * s.w + 2 * ox;
                    let window = [top, top + 1, top + s.w, top + s.w + 1];
                    let mut best = window[0];
                    for &i in &window[1..] {
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((Tensor::from_vec(out_shape, out)?, PoolIndices { input: s, argmax }))
}

pub fn maxpool2x2_backward<T: Scalar>(idx: &PoolIndices, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if dy.data().len() != idx.argmax.len() {
        return Err(Error::shape("maxpool2x2_backward", idx.argmax.len(), dy.shape().dims()));
    }
    let mut dx = Tensor::zeros(idx.input)?;
    let d = dx.data_mut();
    for (&i, &g) in idx.argmax.iter().zip(dy.data()) {
        d[i] += g;
    }
    Ok(dx)
}

/// Interpolation taps along one axis: `(lo, hi, frac)` per destination index.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let pos = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Bilinear resize with half-pixel-center alignment; upscaling only.
pub fn upsample_bilinear<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if out_h < s.h || out_w < s.w {
        return Err(Error::invalid(format!(
            "upsample_bilinear cannot downscale {}x{} to {}x{}",
            s.h, s.w, out_h, out_w
        )));
    }
    let ty = axis_taps(s.h, out_h);
    let tx = axis_taps(s.w, out_w);
    let mut y = Tensor::zeros(Shape::new(s.n, s.c, out_h, out_w))?;
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = y.plane_mut(n, c);
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let fy = T::of(fy);
                let r0 = &src[y0 * s.w..(y0 + 1) * s.w];
                let r1 = &src[y1 * s.w..(y1 + 1) * s.w];
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let fx = T::of(fx);
                    let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                    let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
                    dst[oy * out_w + ox] = top + (bot - top) * fy;
                }
            }
        }
    }
    Ok(y)
}

/// Transpose of [`upsample_bilinear`]'s interpolation weights.
pub fn upsample_bilinear_backward<T: Scalar>(in_shape: Shape, dy: &Tensor<T>) -> Result<Tensor<T>> {
    let ds = dy.shape();
    if ds.n != in_shape.n || ds.c != in_shape.c || ds.h < in_shape.h || ds.w < in_shape.w {
        return Err(Error::shape("upsample_bilinear_backward", in_shape.dims(), ds.dims()));
    }
    let ty = axis_taps(in_shape.h, ds.h);
    let tx = axis_taps(in_shape.w, ds.w);
    let mut dx = Tensor::zeros(in_shape)?;
    let w = in_shape.w;
    for n in 0..ds.n {
        for c in 0..ds.c {
            let g = dy.plane(n, c);
            let d = dx.plane_mut(n, c);
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let fy = T::of(fy);
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let fx = T::of(fx);
                    let v = g[oy * ds.w + ox];
                    let top = v * (T::one() - fy);
                    let bot = v * fy;
                    d[y0 * w + x0] += top * (T::one() - fx);
                    d[y0 * w + x1] += top * fx;
                    d[y1 * w + x0] += bot * (T::one() - fx);
                    d[y1 * w + x1] += bot * fx;
                }
            }
        }
    }
    Ok(dx)
}

/// Channel concatenation, `a` first.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
        return Err(Error::shape("concat_channels", sa.dims(), sb.dims()));
    }
    let mut data = Vec::with_capacity(sa.len() + sb.len());
    for n in 0..sa.n {
        data.extend_from_slice(a.sample(n));
        data.extend_from_slice(b.sample(n));
    }
    Tensor::from_vec(Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w), data)
}

/// Inverse of [`concat_channels`]: the first `c_first` channels, then the rest.
pub fn split_channels<T: Scalar>(x: &Tensor<T>, c_first: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = x.shape();
    if c_first == 0 || c_first >= s.c {
        return Err(Error::invalid(format!(
            "cannot split {} channels at {}",
            s.c, c_first
        )));
    }
    let split = c_first * s.plane();
    let mut a = Vec::with_capacity(s.n * split);
    let mut b = Vec::with_capacity(s.len() - s.n * split);
    for n in 0..s.n {
        let (l, r) = x.sample(n).split_at(split);
        a.extend_from_slice(l);
        b.extend_from_slice(r);
    }
    Ok((
        Tensor::from_vec(Shape::new(s.n, c_first, s.h, s.w), a)?,
        Tensor::from_vec(Shape::new(s.n, s.c - c_first, s.h, s.w), b)?,
    ))
}

pub fn concat_channels_backward<T: Scalar>(dy: &Tensor<T>, c_first: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    split_channels(dy, c_first)
}
