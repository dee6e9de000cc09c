use rand::Rng;

use crate::error::{Error, Result};
use crate::flow::NetworkInput;
use crate::image::BinaryMask;

/// One training example. `ignore` marks pixels left out of the loss
/// (occluded pixels, typically).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub input: NetworkInput,
    pub target: BinaryMask,
    pub ignore: Option<BinaryMask>,
}

impl TrainSample {
    pub fn new(input: NetworkInput, target: BinaryMask, ignore: Option<BinaryMask>) -> Result<Self> {
        let dims = input.dims();
        if target.dims() != dims {
            return Err(Error::shape("TrainSample target", dims, target.dims()));
        }
        if let Some(ig) = &ignore {
            if ig.dims() != dims {
                return Err(Error::shape("TrainSample ignore mask", dims, ig.dims()));
            }
        }
        Ok(TrainSample { input, target, ignore })
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<TrainSample> {
        Ok(TrainSample {
            input: self.input.crop(y0, x0, h, w)?,
            target: self.target.crop(y0, x0, h, w)?,
            ignore: self.ignore.as_ref().map(|m| m.crop(y0, x0, h, w)).transpose()?,
        })
    }

    pub fn mirrored(&self) -> TrainSample {
        TrainSample {
            input: self.input.mirrored(),
            target: self.target.mirrored(),
            ignore: self.ignore.as_ref().map(BinaryMask::mirrored),
        }
    }
}

/// Random `crop x crop` window shared by input and labels, then a mirror
/// with probability `mirror_prob`.
pub fn augment<R: Rng + ?Sized>(sample: &TrainSample, crop: usize, mirror_prob: f64, rng: &mut R) -> Result<TrainSample> {
    let (h, w) = sample.input.dims();
    if crop == 0 || crop > h || crop > w {
        return Err(Error::invalid(format!("crop {crop} does not fit a {h}x{w} sample")));
    }
    let y0 = rng.random_range(0..=h - crop);
    let x0 = rng.random_range(0..=w - crop);
    let out = sample.crop(y0, x0, crop, crop)?;
    Ok(if rng.random_bool(mirror_prob) { out.mirrored() } else { out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{build_input, FlowField, Modality};
    use crate::tensor::{Shape, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flow_sample() -> TrainSample {
        let flow = FlowField::new(4, 6, vec![2.0; 24], vec![1.0; 24]).unwrap();
        let mut raw = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 6)).unwrap();
        raw.plane_mut(0, 0).copy_from_slice(flow.u());
        raw.plane_mut(0, 1).copy_from_slice(flow.v());
        let input = NetworkInput::new(Modality::FlowVectors, raw).unwrap();
        let target = BinaryMask::from_fn(4, 6, |_, x| x < 2).unwrap();
        TrainSample::new(input, target, None).unwrap()
    }

    #[test]
    fn mirror_negates_horizontal_flow() {
        let m = flow_sample().mirrored();
        assert_eq!(m.input.tensor.at(0, 0, 1, 1), -2.0);
        assert_eq!(m.input.tensor.at(0, 1, 1, 1), 1.0);
        assert!(m.target.get(0, 5) && !m.target.get(0, 0));
    }

    #[test]
    fn mirror_is_an_involution() {
        let s = flow_sample();
        assert_eq!(s.mirrored().mirrored(), s);
    }

    #[test]
    fn rightward_angle_mirrors_to_leftward() {
        let flow = FlowField::new(2, 2, vec![1.0, 1.0, 1.0, 3.0], vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let input = build_input(Modality::AngleField, None, None, Some(&flow)).unwrap();
        assert_eq!(input.tensor.at(0, 0, 0, 1), 0.0);
        let m = input.mirrored();
        // pixel (0,1) mirrors onto (0,0); angle 0 becomes pi
        assert!((m.tensor.at(0, 0, 0, 0) - std::f32::consts::PI).abs() < 1e-6);
    }

    #[test]
    fn crop_window_is_shared() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = flow_sample();
        for _ in 0..20 {
            let a = augment(&base, 3, 0.5, &mut rng).unwrap();
            assert_eq!(a.input.dims(), (3, 3));
            assert_eq!(a.target.dims(), (3, 3));
            let mirrored = a.input.tensor.at(0, 0, 0, 0) < 0.0;
            // the target column pattern must agree with the flow sign
            let cols: Vec<bool> = (0..3).map(|x| a.target.get(0, x)).collect();
            if mirrored {
                assert!(!cols[0] || cols[2]);
            } else {
                assert!(!cols[2] || cols[0]);
            }
        }
        assert!(augment(&base, 5, 0.0, &mut rng).is_err());
    }
}
