use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::{augment, TrainSample};
use super::config::TrainConfig;
use super::network::MpNetModel;
use crate::error::{Error, Result};
use crate::image::BinaryMask;
use crate::metrics::iou;
use crate::scalar::Scalar;
use crate::tensor::{OptimizerState, Sgd, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean mini-batch loss.
    pub loss: f64,
    /// Pixel IoU of thresholded predictions over all training crops.
    pub train_iou: f64,
    /// Mean per-sample IoU on the validation set.
    pub val_iou: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Set when training stopped on a non-finite loss or gradient; the model
    /// then holds the parameters from before the failing step.
    pub aborted: Option<String>,
}

impl TrainReport {
    /// `epoch,lr,loss,train_iou,val_iou` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,loss,train_iou,val_iou\n");
        for e in &self.epochs {
            let val = e.val_iou.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:e},{:.6},{:.6},{}", e.epoch, e.lr, e.loss, e.train_iou, val);
        }
        out
    }
}

/// Motion mask of a prediction: `p > 0.5`, with ignored pixels cleared.
pub fn threshold_prediction(prob: &[f32], h: usize, w: usize, ignore: Option<&BinaryMask>) -> Result<BinaryMask> {
    let mut m = BinaryMask::from_vec(h, w, prob.iter().map(|&p| u8::from(p > 0.5)).collect())?;
    if let Some(ig) = ignore {
        m = m.minus(ig)?;
    }
    Ok(m)
}

/// Mean per-sample IoU of eval-mode predictions against the targets.
pub fn evaluate<T: Scalar>(model: &MpNetModel<T>, samples: &[TrainSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let mut total = 0.0;
    for s in samples {
        let p = model.predict(&s.input)?;
        let (h, w) = p.dims();
        let pred = threshold_prediction(p.as_slice(), h, w, s.ignore.as_ref())?;
        let gt = match &s.ignore {
            Some(ig) => s.target.minus(ig)?,
            None => s.target.clone(),
        };
        total += iou(&pred, &gt)?;
    }
    Ok(total / samples.len() as f64)
}

fn stack_batch<T: Scalar>(batch: &[TrainSample]) -> Result<(Tensor<T>, Vec<u8>, Option<Vec<u8>>)> {
    let tensors: Vec<&Tensor<f32>> = batch.iter().map(|s| &s.input.tensor).collect();
    let x = Tensor::stack(&tensors)?.cast::<T>();
    let targets = batch.iter().flat_map(|s| s.target.as_slice().iter().copied()).collect();
    let ignore = if batch.iter().any(|s| s.ignore.is_some()) {
        let mut v = Vec::new();
        for s in batch {
            match &s.ignore {
                Some(m) => v.extend_from_slice(m.as_slice()),
                None => v.extend(std::iter::repeat_n(0u8, s.target.as_slice().len())),
            }
        }
        Some(v)
    } else {
        None
    };
    Ok((x, targets, ignore))
}

/// Mini-batch momentum SGD with random crops and mirrors. Deterministic for
/// a given `tc.seed`. `on_epoch` sees each log entry as it is produced.
pub fn train<T: Scalar>(
    model: &mut MpNetModel<T>,
    data: &[TrainSample],
    val: &[TrainSample],
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    tc.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let c = model.config().input_channels;
    if let Some(s) = data.iter().chain(val).find(|s| s.input.tensor.shape().c != c) {
        return Err(Error::invalid(format!(
            "sample modality {} has {} channels, model expects {c}",
            s.input.modality,
            s.input.tensor.shape().c
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut opt = OptimizerState::new(T::of(tc.lr), T::of(tc.momentum), T::of(tc.weight_decay))?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 1..=tc.epochs {
        let (lr, wd) = tc.schedule(epoch);
        opt.learning_rate = T::of(lr);
        opt.weight_decay = T::of(wd);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        let (mut inter, mut union) = (0usize, 0usize);
        for chunk in order.chunks(tc.batch_size) {
            let batch = chunk
                .iter()
                .map(|&i| augment(&data[i], tc.crop, tc.mirror_prob, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let (x, targets, ignore) = stack_batch::<T>(&batch)?;
            let out = match model.loss_and_grads(&x, &targets, ignore.as_deref()) {
                Ok(o) => o,
                Err(Error::InvalidArgument(m)) if m.contains("ignored") => continue,
                Err(e) => return Err(e),
            };
            let loss = out.loss.as_f64();
            if !loss.is_finite() {
                report.aborted = Some(format!("non-finite loss {loss} in epoch {epoch}"));
                return Ok(report);
            }
            let grads = out.grads.slices();
            if let Err(e) = Sgd::step(&mut model.param_slices_mut(), &grads, &mut opt) {
                match e {
                    Error::NonFinite(m) => {
                        report.aborted = Some(format!("epoch {epoch}: {m}"));
                        return Ok(report);
                    }
                    e => return Err(e),
                }
            }
            model.apply_running_stats(out.running);
            loss_sum += loss;
            batches += 1;
            let prob = crate::tensor::softmax_channel(&out.logits)?;
            for (i, (&p, &t)) in prob.data().iter().zip(&targets).enumerate() {
                if ignore.as_ref().is_some_and(|ig| ig[i] != 0) {
                    continue;
                }
                let pred = p.as_f64() > 0.5;
                let t = t != 0;
                inter += usize::from(pred && t);
                union += usize::from(pred || t);
            }
        }
        let val_iou = if val.is_empty() { None } else { Some(evaluate(model, val)?) };
        let log = EpochLog {
            epoch,
            lr,
            loss: if batches == 0 { f64::NAN } else { loss_sum / batches as f64 },
            train_iou: if union == 0 { 1.0 } else { inter as f64 / union as f64 },
            val_iou,
        };
        on_epoch(&log);
        report.epochs.push(log);
    }
    Ok(report)
}
