use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hyper-parameters and velocity buffers of momentum SGD.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub learning_rate: T,
    pub momentum: T,
    pub weight_decay: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(learning_rate: T, momentum: T, weight_decay: T) -> Result<Self> {
        if !(learning_rate >= T::zero()) || !(momentum >= T::zero() && momentum < T::one()) || !(weight_decay >= T::zero()) {
            return Err(Error::invalid(format!(
                "optimizer needs lr >= 0, momentum in [0,1), decay >= 0; got {learning_rate}, {momentum}, {weight_decay}"
            )));
        }
        Ok(OptimizerState {
            learning_rate,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        })
    }

    pub fn velocity(&self) -> &[Vec<T>] {
        &self.velocity
    }
}

/// Momentum SGD with L2 weight decay folded into the gradient:
/// `v = momentum * v + (g + decay * p)`, `p -= lr * v`.
pub struct Sgd;

impl Sgd {
    pub fn step<T: Scalar>(params: &mut [&mut [T]], grads: &[&[T]], state: &mut OptimizerState<T>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("sgd_step tensor count", params.len(), grads.len()));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::shape("sgd_step", (i, p.len()), g.len()));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient tensor {i}, entry {j} = {}", g[j])));
            }
        }
        if state.velocity.is_empty() {
            state.velocity = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        } else if state.velocity.len() != params.len()
            || state.velocity.iter().zip(params.iter()).any(|(v, p)| v.len() != p.len())
        {
            return Err(Error::invalid("sgd_step: parameter layout changed between steps"));
        }
        let (lr, mu, wd) = (state.learning_rate, state.momentum, state.weight_decay);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
            for ((pv, &gv), vv) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vv = mu * *vv + (gv + wd * *pv);
                *pv -= lr * *vv;
            }
        }
        Ok(())
    }
}
