use super::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Two-class softmax cross-entropy averaged over non-ignored pixels.
///
/// `targets` holds one 0/1 label per pixel of every sample (`n * h * w`);
/// nonzero entries of `ignore` exclude the pixel from loss and gradient.
/// Returns the loss and `(softmax - onehot) / count`.
pub fn softmax_xent<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[u8],
    ignore: Option<&[u8]>,
) -> Result<(T, Tensor<T>)> {
    let s = logits.shape();
    if s.c != 2 {
        return Err(Error::shape("softmax_xent logits (expected 2 channels)", s.dims(), 2));
    }
    let pixels = s.n * s.plane();
    if targets.len() != pixels {
        return Err(Error::shape("softmax_xent targets", s.dims(), targets.len()));
    }
    if let Some(ig) = ignore {
        if ig.len() != pixels {
            return Err(Error::shape("softmax_xent ignore mask", s.dims(), ig.len()));
        }
    }
    let keep = |i: usize| ignore.is_none_or(|ig| ig[i] == 0);
    let count = (0..pixels).filter(|&i| keep(i)).count();
    if count == 0 {
        return Err(Error::invalid("softmax_xent: every pixel is ignored"));
    }
    let inv = T::one() / T::of(count as f64);
    let mut grad = Tensor::zeros(s)?;
    let mut loss = 0.0f64;
    let plane = s.plane();
    for n in 0..s.n {
        for i in 0..plane {
            let flat = n * plane + i;
            if !keep(flat) {
                continue;
            }
            let (l0, l1) = (logits.plane(n, 0)[i], logits.plane(n, 1)[i]);
            let mx = l0.max(l1);
            let (e0, e1) = ((l0 - mx).exp(), (l1 - mx).exp());
            let z = e0 + e1;
            let (p0, p1) = (e0 / z, e1 / z);
            let label = targets[flat] != 0;
            let picked = if label { l1 } else { l0 };
            loss += (mx + z.ln() - picked).as_f64();
            let (t0, t1) = if label { (T::zero(), T::one()) } else { (T::one(), T::zero()) };
            grad.plane_mut(n, 0)[i] = (p0 - t0) * inv;
            grad.plane_mut(n, 1)[i] = (p1 - t1) * inv;
        }
    }
    Ok((T::of(loss / count as f64), grad))
}

/// Probability of the second class, shape `(n, 1, h, w)`.
pub fn softmax_channel<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let s = logits.shape();
    if s.c != 2 {
        return Err(Error::shape("softmax_channel (expected 2 channels)", s.dims(), 2));
    }
    let mut out = Vec::with_capacity(s.n * s.plane());
    for n in 0..s.n {
        for (&a, &b) in logits.plane(n, 0).iter().zip(logits.plane(n, 1)) {
            // 1 / (1 + exp(a - b)), saturating cleanly at both ends
            out.push(T::one() / (T::one() + (a - b).exp()));
        }
    }
    Tensor::from_vec(Shape::new(s.n, 1, s.h, s.w), out)
}
