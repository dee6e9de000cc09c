use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Per-channel affine parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    /// `None` until set explicitly or by a first training step.
    pub running: Option<RunningStats<T>>,
    /// Weight of the new batch statistic in the running average.
    pub momentum: T,
    pub eps: T,
}

impl<T: Scalar> BatchNormParams<T> {
    /// gamma 1, beta 0, running statistics uninitialized.
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running: None,
            momentum: T::of(0.1),
            eps: T::of(1e-5),
        }
    }

    /// Running mean 0 and variance 1.
    pub fn with_unit_running_stats(mut self) -> Self {
        let c = self.channels();
        self.running = Some(RunningStats {
            mean: vec![T::zero(); c],
            var: vec![T::one(); c],
        });
        self
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        let c = x.shape().c;
        if c != self.channels() || self.beta.len() != c {
            return Err(Error::shape("batchnorm", x.shape().dims(), self.channels()));
        }
        if !(self.eps > T::zero()) {
            return Err(Error::invalid("batchnorm epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

/// Normalizes with batch statistics over `(n, h, w)`. The updated running
/// statistics are returned, not written into `p`.
pub fn batchnorm_train<T: Scalar>(
    x: &Tensor<T>,
    p: &BatchNormParams<T>,
) -> Result<(Tensor<T>, BatchNormCache<T>, RunningStats<T>)> {
    p.check(x)?;
    let s = x.shape();
    let count = (s.n * s.plane()) as f64;
    let mut y = Tensor::zeros(s)?;
    let mut x_hat = Tensor::zeros(s)?;
    let mut inv_std = Vec::with_capacity(s.c);
    let mut run_mean = Vec::with_capacity(s.c);
    let mut run_var = Vec::with_capacity(s.c);
    for c in 0..s.c {
        let mut sum = 0.0;
        for n in 0..s.n {
            sum += x.plane(n, c).iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let mean = sum / count;
        let mut sq = 0.0;
        for n in 0..s.n {
            sq += x.plane(n, c).iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>();
        }
        let var = sq / count;
        let istd = 1.0 / (var + p.eps.as_f64()).sqrt();
        let (g, b) = (p.gamma[c], p.beta[c]);
        let (mean_t, istd_t) = (T::of(mean), T::of(istd));
        for n in 0..s.n {
            let src = x.plane(n, c);
            let xh: Vec<T> = src.iter().map(|&v| (v - mean_t) * istd_t).collect();
            for (o, &h) in y.plane_mut(n, c).iter_mut().zip(&xh) {
                *o = g * h + b;
            }
            x_hat.plane_mut(n, c).copy_from_slice(&xh);
        }
        inv_std.push(istd_t);

        let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
        let m = p.momentum;
        match &p.running {
            Some(r) => {
                run_mean.push((T::one() - m) * r.mean[c] + m * mean_t);
                run_var.push((T::one() - m) * r.var[c] + m * T::of(unbiased));
            }
            None => {
                run_mean.push(mean_t);
                run_var.push(T::of(unbiased));
            }
        }
    }
    Ok((
        y,
        BatchNormCache { x_hat, inv_std },
        RunningStats {
            mean: run_mean,
            var: run_var,
        },
    ))
}

pub fn batchnorm_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    p: &BatchNormParams<T>,
    dy: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    let s = cache.x_hat.shape();
    if dy.shape() != s {
        return Err(Error::shape("batchnorm_backward", s.dims(), dy.shape().dims()));
    }
    let count = (s.n * s.plane()) as f64;
    let mut dx = Tensor::zeros(s)?;
    let mut dgamma = Vec::with_capacity(s.c);
    let mut dbeta = Vec::with_capacity(s.c);
    for c in 0..s.c {
        let (mut sum_dy, mut sum_dy_xh) = (0.0f64, 0.0f64);
        for n in 0..s.n {
            for (&g, &h) in dy.plane(n, c).iter().zip(cache.x_hat.plane(n, c)) {
                sum_dy += g.as_f64();
                sum_dy_xh += (g * h).as_f64();
            }
        }
        dgamma.push(T::of(sum_dy_xh));
        dbeta.push(T::of(sum_dy));
        let scale = p.gamma[c] * cache.inv_std[c];
        let mean_dy = T::of(sum_dy / count);
        let mean_dy_xh = T::of(sum_dy_xh / count);
        for n in 0..s.n {
            let xh = cache.x_hat.plane(n, c);
            let g = dy.plane(n, c);
            for ((o, &gv), &h) in dx.plane_mut(n, c).iter_mut().zip(g).zip(xh) {
                *o = scale * (gv - mean_dy - h * mean_dy_xh);
            }
        }
    }
    Ok(BatchNormGrads {
        input: dx,
        gamma: dgamma,
        beta: dbeta,
    })
}

fn eval_coefficients<T: Scalar>(p: &BatchNormParams<T>) -> Result<Vec<(T, T)>> {
    let r = p
        .running
        .as_ref()
        .ok_or_else(|| Error::invalid("batchnorm eval mode requires initialized running statistics"))?;
    Ok((0..p.channels())
        .map(|c| {
            let istd = T::one() / (r.var[c] + p.eps).sqrt();
            (p.gamma[c] * istd, p.beta[c] - p.gamma[c] * istd * r.mean[c])
        })
        .collect())
}

/// Per-element affine map using the running statistics.
pub fn batchnorm_eval<T: Scalar>(x: &Tensor<T>, p: &BatchNormParams<T>) -> Result<Tensor<T>> {
    p.check(x)?;
    let coef = eval_coefficients(p)?;
    let s = x.shape();
    let mut y = x.clone();
    for n in 0..s.n {
        for (c, &(a, b)) in coef.iter().enumerate() {
            for v in y.plane_mut(n, c) {
                *v = a * *v + b;
            }
        }
    }
    Ok(y)
}

/// Input gradient of [`batchnorm_eval`].
pub fn batchnorm_eval_backward<T: Scalar>(p: &BatchNormParams<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    let coef = eval_coefficients(p)?;
    let s = dy.shape();
    if s.c != coef.len() {
        return Err(Error::shape("batchnorm_eval_backward", s.dims(), coef.len()));
    }
    let mut dx = dy.clone();
    for n in 0..s.n {
        for (c, &(a, _)) in coef.iter().enumerate() {
            for v in dx.plane_mut(n, c) {
                *v = *v * a;
            }
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::super::Shape;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn channel_moments(y: &Tensor<f32>, c: usize) -> (f64, f64) {
        let s = y.shape();
        let vals: Vec<f64> = (0..s.n).flat_map(|n| y.plane(n, c).iter().map(|&v| v as f64)).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        (m, v)
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::random_uniform(Shape::new(4, 3, 5, 5), -3.0, 7.0, &mut rng).unwrap();
        let p = BatchNormParams::new(3);
        let (y, _, _) = batchnorm_train(&x, &p).unwrap();
        for c in 0..3 {
            let (m, v) = channel_moments(&y, c);
            assert!(m.abs() < 1e-4 && (v - 1.0).abs() < 1e-4, "c{c}: {m} {v}");
        }
        let mut p = BatchNormParams::new(3);
        p.gamma = vec![2.0; 3];
        p.beta = vec![3.0; 3];
        let (y, _, _) = batchnorm_train(&x, &p).unwrap();
        for c in 0..3 {
            let (m, v) = channel_moments(&y, c);
            assert!((m - 3.0).abs() < 1e-4 && (v.sqrt() - 2.0).abs() < 1e-4);
        }
    }

    #[test]
    fn running_stats_update_with_momentum() {
        let x = Tensor::<f64>::from_vec(Shape::new(1, 1, 1, 4), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = BatchNormParams::new(1).with_unit_running_stats();
        let (_, _, r) = batchnorm_train(&x, &p).unwrap();
        assert!((r.mean[0] - 0.25).abs() < 1e-12);
        // unbiased batch variance 5/3
        assert!((r.var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
        assert_eq!(p.running.as_ref().unwrap().mean[0], 0.0);
    }

    #[test]
    fn eval_requires_running_stats_and_is_affine() {
        let x = Tensor::<f32>::full(Shape::new(1, 2, 2, 2), 1.0).unwrap();
        assert!(batchnorm_eval(&x, &BatchNormParams::new(2)).is_err());
        let mut p = BatchNormParams::<f32>::new(2);
        p.running = Some(RunningStats {
            mean: vec![1.0, -1.0],
            var: vec![4.0, 1.0],
        });
        p.eps = 1e-12;
        let before = p.clone();
        let y = batchnorm_eval(&x, &p).unwrap();
        assert!(y.plane(0, 0).iter().all(|&v| v.abs() < 1e-6));
        assert!(y.plane(0, 1).iter().all(|&v| (v - 2.0).abs() < 1e-5));
        assert_eq!(p, before);
        assert!(batchnorm_eval(&Tensor::<f32>::zeros(Shape::new(1, 3, 2, 2)).unwrap(), &p).is_err());
    }
}
