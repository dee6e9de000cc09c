use crate::error::{Error, Result};

/// Encoder-decoder layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MpNetConfig {
    pub input_channels: usize,
    pub num_encoder_stages: usize,
    /// Decoder units, each doubling resolution; at most `num_encoder_stages - 1`.
    pub num_decoder_units: usize,
    pub channels_per_stage: Vec<usize>,
    pub convs_per_stage: usize,
    pub kernel_size: usize,
}

impl MpNetConfig {
    /// Five stages of widths 32..256 with the full four decoder units.
    pub fn full(input_channels: usize) -> Self {
        MpNetConfig {
            input_channels,
            num_encoder_stages: 5,
            num_decoder_units: 4,
            channels_per_stage: vec![32, 64, 128, 256, 256],
            convs_per_stage: 2,
            kernel_size: 3,
        }
    }

    /// Narrow five-stage network sized for single-core CPU training at 64x64.
    pub fn desk(input_channels: usize, num_decoder_units: usize) -> Self {
        MpNetConfig {
            input_channels,
            num_encoder_stages: 5,
            num_decoder_units,
            channels_per_stage: vec![12, 24, 32, 48, 48],
            convs_per_stage: 2,
            kernel_size: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.input_channels == 0 || self.convs_per_stage == 0 {
            return bad("input channels and convs per stage must be positive".into());
        }
        if self.num_encoder_stages == 0 {
            return bad("at least one encoder stage is required".into());
        }
        if self.num_decoder_units == 0 || self.num_decoder_units + 1 > self.num_encoder_stages {
            return bad(format!(
                "decoder units must be in [1, {}], got {}",
                self.num_encoder_stages.saturating_sub(1),
                self.num_decoder_units
            ));
        }
        if self.channels_per_stage.len() != self.num_encoder_stages {
            return bad(format!(
                "channels_per_stage has {} entries for {} stages",
                self.channels_per_stage.len(),
                self.num_encoder_stages
            ));
        }
        if self.channels_per_stage.contains(&0) {
            return bad("stage widths must be positive".into());
        }
        if self.kernel_size % 2 == 0 {
            return bad(format!("kernel size must be odd, got {}", self.kernel_size));
        }
        Ok(())
    }

    /// Input height and width must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.num_encoder_stages
    }

    /// Downsampling factor of the map the classifier sees.
    pub fn classifier_stride(&self) -> usize {
        1 << (self.num_encoder_stages - self.num_decoder_units)
    }
}

/// SGD schedule and augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Learning rate and weight decay are multiplied by `step_factor` after
    /// every `step_every` epochs.
    pub step_every: usize,
    pub step_factor: f64,
    pub crop: usize,
    pub mirror_prob: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Full-scale recipe: batch 13, lr 0.003, momentum 0.9, decay 0.005,
    /// 27 epochs with a x0.1 step every 9.
    pub fn full() -> Self {
        TrainConfig {
            batch_size: 13,
            lr: 0.003,
            momentum: 0.9,
            weight_decay: 0.005,
            epochs: 27,
            step_every: 9,
            step_factor: 0.1,
            crop: 256,
            mirror_prob: 0.5,
            seed: 0,
        }
    }

    /// Same schedule shape at desk scale: batch 8 on 64x64 crops, with a
    /// larger base rate to compensate for the short run.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 8,
            lr: 0.03,
            crop: 64,
            weight_decay: 0.0005,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.lr > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay >= 0.0
            && self.epochs > 0
            && self.step_every > 0
            && self.step_factor > 0.0
            && self.step_factor < 1.0
            && self.crop > 0
            && (0.0..=1.0).contains(&self.mirror_prob);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid training configuration {self:?}")))
        }
    }

    /// `(lr, weight_decay)` in effect during 1-based `epoch`.
    pub fn schedule(&self, epoch: usize) -> (f64, f64) {
        let steps = (epoch.max(1) - 1) / self.step_every;
        let f = self.step_factor.powi(steps as i32);
        (self.lr * f, self.weight_decay * f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_schedule_of_full_recipe() {
        let tc = TrainConfig::full();
        for (epoch, lr) in [(1, 0.003), (9, 0.003), (10, 0.0003), (18, 0.0003), (19, 0.00003), (27, 0.00003)] {
            let (got_lr, got_wd) = tc.schedule(epoch);
            assert!((got_lr - lr).abs() < 1e-15, "epoch {epoch}: {got_lr}");
            // decay follows the same steps
            assert!((got_wd / 0.005 - lr / 0.003).abs() < 1e-12);
        }
    }

    #[test]
    fn decoder_bounds() {
        let mut c = MpNetConfig::full(2);
        assert!(c.validate().is_ok());
        c.num_decoder_units = 5;
        assert!(c.validate().is_err());
        c.num_decoder_units = 0;
        assert!(c.validate().is_err());
        let c = MpNetConfig::desk(2, 2);
        assert_eq!(c.size_multiple(), 32);
        assert_eq!(c.classifier_stride(), 8);
        assert_eq!(MpNetConfig::full(2).classifier_stride(), 2);
    }
}
