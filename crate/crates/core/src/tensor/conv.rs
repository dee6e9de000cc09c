use rand::Rng;

use super::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Weights `(out, in, kh, kw)` and per-output-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvParams<T> {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn xavier<R: Rng + ?Sized>(out_ch: usize, in_ch: usize, kernel: usize, rng: &mut R) -> Result<Self> {
        let fan_in = (in_ch * kernel * kernel) as f64;
        let fan_out = (out_ch * kernel * kernel) as f64;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        Ok(ConvParams {
            weight: Tensor::random_uniform(Shape::new(out_ch, in_ch, kernel, kernel), -limit, limit, rng)?,
            bias: vec![T::zero(); out_ch],
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().c
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

pub fn conv_output_size(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if stride == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct Geometry {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    kh: usize,
    kw: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn new<T: Scalar>(x: Shape, p: &ConvParams<T>, stride: usize, pad: usize) -> Result<Self> {
        let ws = p.weight.shape();
        if ws.c != x.c {
            return Err(Error::shape("conv2d", x.dims(), ws.dims()));
        }
        if p.bias.len() != ws.n {
            return Err(Error::shape("conv2d bias", ws.dims(), p.bias.len()));
        }
        let out_h = conv_output_size(x.h, ws.h, stride, pad);
        let out_w = conv_output_size(x.w, ws.w, stride, pad);
        match (out_h, out_w) {
            (Some(out_h), Some(out_w)) => Ok(Geometry {
                in_c: x.c,
                in_h: x.h,
                in_w: x.w,
                kh: ws.h,
                kw: ws.w,
                out_h,
                out_w,
                stride,
                pad,
            }),
            _ => Err(Error::shape("conv2d kernel vs padded input", x.dims(), ws.dims())),
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn col_rows(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source offset along one axis, or `None` when it falls in the padding.
    #[inline]
    fn src(&self, out: usize, k: usize, size: usize) -> Option<usize> {
        let pos = (out * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < size).then_some(pos as usize)
    }

    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let plane = self.in_h * self.in_w;
        let ncols = self.col_cols();
        let mut row = 0;
        for c in 0..self.in_c {
            let xc = &x[c * plane..(c + 1) * plane];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.out_h {
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        match self.src(oy, ky, self.in_h) {
                            None => line.fill(T::zero()),
                            Some(sy) => {
                                let src_row = &xc[sy * self.in_w..(sy + 1) * self.in_w];
                                for (ox, d) in line.iter_mut().enumerate() {
                                    *d = match self.src(ox, kx, self.in_w) {
                                        Some(sx) => src_row[sx],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let plane = self.in_h * self.in_w;
        let ncols = self.col_cols();
        let mut row = 0;
        for c in 0..self.in_c {
            let dxc = &mut dx[c * plane..(c + 1) * plane];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.out_h {
                        let Some(sy) = self.src(oy, ky, self.in_h) else { continue };
                        let line = &src[oy * self.out_w..(oy + 1) * self.out_w];
                        let dst_row = &mut dxc[sy * self.in_w..(sy + 1) * self.in_w];
                        for (ox, &g) in line.iter().enumerate() {
                            if let Some(sx) = self.src(ox, kx, self.in_w) {
                                dst_row[sx] += g;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// 2-D cross-correlation plus bias.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let xs = x.shape();
    let g = Geometry::new(xs, p, stride, pad)?;
    let out_c = p.out_channels();
    let mut y = Tensor::zeros(Shape::new(xs.n, out_c, g.out_h, g.out_w))?;
    let (k, ncols) = (g.col_rows(), g.col_cols());
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); k * ncols] };
    for n in 0..xs.n {
        let yn = y.sample_mut(n);
        for (oc, plane) in yn.chunks_exact_mut(ncols).enumerate() {
            plane.fill(p.bias[oc]);
        }
        let rhs: &[T] = if g.is_pointwise() {
            x.sample(n)
        } else {
            g.im2col(x.sample(n), &mut cols);
            &cols
        };
        T::gemm(out_c, k, ncols, T::one(), p.weight.data(), false, rhs, false, T::one(), yn);
    }
    Ok(y)
}

/// Gradients of [`conv2d`] given the forward input and the output gradient.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    p: &ConvParams<T>,
    stride: usize,
    pad: usize,
    dy: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let xs = x.shape();
    let g = Geometry::new(xs, p, stride, pad)?;
    let out_c = p.out_channels();
    let expect = Shape::new(xs.n, out_c, g.out_h, g.out_w);
    if dy.shape() != expect {
        return Err(Error::shape("conv2d_backward", expect.dims(), dy.shape().dims()));
    }
    let (k, ncols) = (g.col_rows(), g.col_cols());
    let mut dx = Tensor::zeros(xs)?;
    let mut dw = Tensor::zeros(p.weight.shape())?;
    let mut db = vec![T::zero(); out_c];
    let pointwise = g.is_pointwise();
    let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); k * ncols] };
    let mut dcols = vec![T::zero(); k * ncols];
    for n in 0..xs.n {
        let dyn_ = dy.sample(n);
        for (oc, plane) in dyn_.chunks_exact(ncols).enumerate() {
            db[oc] += plane.iter().copied().sum::<T>();
        }
        let rhs: &[T] = if pointwise {
            x.sample(n)
        } else {
            g.im2col(x.sample(n), &mut cols);
            &cols
        };
        // dW += dY (out x P) * cols^T (P x K)
        T::gemm(out_c, ncols, k, T::one(), dyn_, false, rhs, true, T::one(), dw.data_mut());
        if pointwise {
            T::gemm(k, out_c, ncols, T::one(), p.weight.data(), true, dyn_, false, T::zero(), dx.sample_mut(n));
        } else {
            T::gemm(k, out_c, ncols, T::one(), p.weight.data(), true, dyn_, false, T::zero(), &mut dcols);
            g.col2im(&dcols, dx.sample_mut(n));
        }
    }
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Six nested loops, straight from the definition.
    fn direct_conv(x: &Tensor<f64>, p: &ConvParams<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let xs = x.shape();
        let ws = p.weight.shape();
        let oh = (xs.h + 2 * pad - ws.h) / stride + 1;
        let ow = (xs.w + 2 * pad - ws.w) / stride + 1;
        let mut y = Tensor::zeros(Shape::new(xs.n, ws.n, oh, ow)).unwrap();
        for n in 0..xs.n {
            for o in 0..ws.n {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = p.bias[o];
                        for c in 0..xs.c {
                            for ky in 0..ws.h {
                                for kx in 0..ws.w {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                                        s += x.at(n, c, iy as usize, ix as usize) * p.weight.at(o, c, ky, kx);
                                    }
                                }
                            }
                        }
                        y.set(n, o, oy, ox, s);
                    }
                }
            }
        }
        y
    }

    #[test]
    fn ones_kernel_center_sums_nine() {
        let x = Tensor::<f32>::full(Shape::new(1, 1, 3, 3), 1.0).unwrap();
        let p = ConvParams {
            weight: Tensor::full(Shape::new(1, 1, 3, 3), 1.0).unwrap(),
            bias: vec![0.0],
        };
        let y = conv2d(&x, &p, 1, 1).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 3, 3));
        assert_eq!(y.at(0, 0, 1, 1), 9.0);
        assert_eq!(y.at(0, 0, 0, 0), 4.0);
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f32>::random_uniform(Shape::new(2, 1, 5, 6), -1.0, 1.0, &mut rng).unwrap();
        let mut w = Tensor::zeros(Shape::new(1, 1, 3, 3)).unwrap();
        w.set(0, 0, 1, 1, 1.0);
        let y = conv2d(&x, &ConvParams { weight: w, bias: vec![0.0] }, 1, 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matches_direct_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::<f64>::random_uniform(Shape::new(2, 3, 7, 7), -1.0, 1.0, &mut rng).unwrap();
        let mut p = ConvParams::<f64>::xavier(4, 3, 3, &mut rng).unwrap();
        p.bias = vec![0.1, -0.2, 0.3, 0.0];
        for (stride, pad) in [(1, 1), (1, 0), (2, 1), (2, 0)] {
            let want = direct_conv(&x, &p, stride, pad);
            let got32 = conv2d(&x.cast::<f32>(), &ConvParams { weight: p.weight.cast(), bias: p.bias.iter().map(|&b| b as f32).collect() }, stride, pad).unwrap();
            assert_eq!(got32.shape(), want.shape());
            for (g, w) in got32.data().iter().zip(want.data()) {
                let rel = (*g as f64 - w).abs() / w.abs().max(1e-3);
                assert!(rel < 1e-5, "stride {stride} pad {pad}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn mismatched_channels_name_both_shapes() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 4)).unwrap();
        let p = ConvParams {
            weight: Tensor::zeros(Shape::new(1, 3, 3, 3)).unwrap(),
            bias: vec![0.0],
        };
        let msg = conv2d(&x, &p, 1, 1).unwrap_err().to_string();
        assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[1, 3, 3, 3]"), "{msg}");
        let big = ConvParams {
            weight: Tensor::zeros(Shape::new(1, 2, 7, 7)).unwrap(),
            bias: vec![0.0],
        };
        assert!(conv2d(&x, &big, 1, 1).is_err());
    }

    #[test]
    fn linear_in_input_without_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f32>::random_uniform(Shape::new(1, 2, 6, 6), -1.0, 1.0, &mut rng).unwrap();
        let p = ConvParams::<f32>::xavier(3, 2, 3, &mut rng).unwrap();
        let y = conv2d(&x, &p, 1, 1).unwrap();
        let y2 = conv2d(&x.scale(2.5), &p, 1, 1).unwrap();
        for (a, b) in y.data().iter().zip(y2.data()) {
            assert!((a * 2.5 - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
    }
}
