use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::MpNetConfig;
use crate::error::{Error, Result};
use crate::flow::NetworkInput;
use crate::image::ScalarMap;
use crate::scalar::Scalar;
use crate::tensor::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, concat_channels, conv2d, conv2d_backward,
    maxpool2x2, maxpool2x2_backward, relu, relu_backward, softmax_channel, softmax_xent, split_channels,
    upsample_bilinear, upsample_bilinear_backward, BatchNormCache, BatchNormParams, ConvParams, PoolIndices,
    RunningStats, Shape, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// conv -> batch norm -> ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T> {
    pub conv: ConvParams<T>,
    pub bn: BatchNormParams<T>,
}

impl<T: Scalar> ConvBlock<T> {
    fn new(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(ConvBlock {
            conv: ConvParams::xavier(out_ch, in_ch, kernel, rng)?,
            bn: BatchNormParams::new(out_ch).with_unit_running_stats(),
        })
    }

    fn pad(&self) -> usize {
        self.conv.weight.shape().h / 2
    }
}

struct BlockTape<T> {
    input: Tensor<T>,
    bn: BatchNormCache<T>,
    pre_relu: Tensor<T>,
}

/// Encoder stages, decoder units and the 1x1 classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MpNetModel<T> {
    config: MpNetConfig,
    encoder: Vec<Vec<ConvBlock<T>>>,
    decoder: Vec<Vec<ConvBlock<T>>>,
    classifier: ConvParams<T>,
}

/// Gradients in the order of [`MpNetModel::param_slices_mut`].
#[derive(Debug, Clone)]
pub struct ModelGrads<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> ModelGrads<T> {
    pub fn slices(&self) -> Vec<&[T]> {
        self.tensors.iter().map(|v| v.as_slice()).collect()
    }
}

/// Everything a training step produces besides the parameter update.
pub struct StepOutput<T> {
    pub loss: T,
    pub grads: ModelGrads<T>,
    pub running: Vec<RunningStats<T>>,
    /// Full-resolution logits of the batch.
    pub logits: Tensor<T>,
}

impl<T: Scalar> MpNetModel<T> {
    /// Xavier-uniform convolutions, zero biases, unit batch-norm scale.
    pub fn build(config: &MpNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.kernel_size;
        let mut encoder = Vec::with_capacity(config.num_encoder_stages);
        let mut in_ch = config.input_channels;
        for &width in &config.channels_per_stage {
            let mut blocks = Vec::with_capacity(config.convs_per_stage);
            for _ in 0..config.convs_per_stage {
                blocks.push(ConvBlock::new(in_ch, width, k, &mut rng)?);
                in_ch = width;
            }
            encoder.push(blocks);
        }
        let mut decoder = Vec::with_capacity(config.num_decoder_units);
        for unit in 0..config.num_decoder_units {
            let skip = config.channels_per_stage[config.num_encoder_stages - 1 - unit];
            let out = skip;
            decoder.push(vec![
                ConvBlock::new(in_ch + skip, out, k, &mut rng)?,
                ConvBlock::new(out, out, k, &mut rng)?,
            ]);
            in_ch = out;
        }
        let classifier = ConvParams::xavier(2, in_ch, 1, &mut rng)?;
        Ok(MpNetModel {
            config: config.clone(),
            encoder,
            decoder,
            classifier,
        })
    }

    pub fn config(&self) -> &MpNetConfig {
        &self.config
    }

    fn blocks(&self) -> impl Iterator<Item = &ConvBlock<T>> {
        self.encoder.iter().chain(&self.decoder).flatten()
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut ConvBlock<T>> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut()).flatten()
    }

    pub fn classifier(&self) -> &ConvParams<T> {
        &self.classifier
    }

    /// Dotted names of the learnable tensors, in parameter order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, group) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, unit) in group.iter().enumerate() {
                for j in 0..unit.len() {
                    for p in ["conv.weight", "conv.bias", "bn.gamma", "bn.beta"] {
                        names.push(format!("{prefix}.{i}.{j}.{p}"));
                    }
                }
            }
        }
        names.push("classifier.weight".into());
        names.push("classifier.bias".into());
        names
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for b in self.encoder.iter_mut().chain(self.decoder.iter_mut()).flatten() {
            out.push(b.conv.weight.data_mut());
            out.push(&mut b.conv.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(self.classifier.weight.data_mut());
        out.push(&mut self.classifier.bias);
        out
    }

    pub fn param_slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for b in self.blocks() {
            out.push(b.conv.weight.data());
            out.push(&b.conv.bias);
            out.push(&b.bn.gamma);
            out.push(&b.bn.beta);
        }
        out.push(self.classifier.weight.data());
        out.push(&self.classifier.bias);
        out
    }

    /// Every stored tensor (parameters and running statistics) with its
    /// name and shape, in serialization order.
    pub fn state(&self) -> Vec<(String, Vec<usize>, Vec<T>)> {
        let mut out = Vec::new();
        for (prefix, group) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, unit) in group.iter().enumerate() {
                for (j, b) in unit.iter().enumerate() {
                    let c = b.bn.channels();
                    let (mean, var) = match &b.bn.running {
                        Some(r) => (r.mean.clone(), r.var.clone()),
                        None => (vec![T::zero(); c], vec![T::one(); c]),
                    };
                    let name = |p: &str| format!("{prefix}.{i}.{j}.{p}");
                    out.push((name("conv.weight"), b.conv.weight.shape().dims().to_vec(), b.conv.weight.data().to_vec()));
                    out.push((name("conv.bias"), vec![c], b.conv.bias.clone()));
                    out.push((name("bn.gamma"), vec![c], b.bn.gamma.clone()));
                    out.push((name("bn.beta"), vec![c], b.bn.beta.clone()));
                    out.push((name("bn.running_mean"), vec![c], mean));
                    out.push((name("bn.running_var"), vec![c], var));
                }
            }
        }
        out.push((
            "classifier.weight".into(),
            self.classifier.weight.shape().dims().to_vec(),
            self.classifier.weight.data().to_vec(),
        ));
        out.push(("classifier.bias".into(), vec![2], self.classifier.bias.clone()));
        out
    }

    /// Overwrites the tensors listed by [`Self::state`], in the same order.
    pub fn set_state(&mut self, values: Vec<Vec<T>>) -> Result<()> {
        let expected: Vec<usize> = self.state().iter().map(|t| t.2.len()).collect();
        if values.len() != expected.len() || values.iter().zip(&expected).any(|(v, &n)| v.len() != n) {
            return Err(Error::shape(
                "set_state",
                expected,
                values.iter().map(Vec::len).collect::<Vec<_>>(),
            ));
        }
        let mut it = values.into_iter();
        for b in self.encoder.iter_mut().chain(self.decoder.iter_mut()).flatten() {
            b.conv.weight.data_mut().copy_from_slice(&it.next().expect("counted"));
            b.conv.bias = it.next().expect("counted");
            b.bn.gamma = it.next().expect("counted");
            b.bn.beta = it.next().expect("counted");
            let mean = it.next().expect("counted");
            let var = it.next().expect("counted");
            b.bn.running = Some(RunningStats { mean, var });
        }
        self.classifier.weight.data_mut().copy_from_slice(&it.next().expect("counted"));
        self.classifier.bias = it.next().expect("counted");
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Batch-norm layers in parameter order.
    pub fn batchnorms(&self) -> Vec<&BatchNormParams<T>> {
        self.blocks().map(|b| &b.bn).collect()
    }

    pub fn batchnorms_mut(&mut self) -> Vec<&mut BatchNormParams<T>> {
        self.blocks_mut().map(|b| &mut b.bn).collect()
    }

    /// Conv layers of all blocks then the classifier, in parameter order.
    pub fn convs_mut(&mut self) -> Vec<&mut ConvParams<T>> {
        let mut out: Vec<&mut ConvParams<T>> = Vec::new();
        for b in self.encoder.iter_mut().chain(self.decoder.iter_mut()).flatten() {
            out.push(&mut b.conv);
        }
        out.push(&mut self.classifier);
        out
    }

    pub fn apply_running_stats(&mut self, stats: Vec<RunningStats<T>>) {
        for (bn, s) in self.batchnorms_mut().into_iter().zip(stats) {
            bn.running = Some(s);
        }
    }

    /// Resolution of the map fed to the classifier.
    pub fn classifier_input_size(&self, h: usize, w: usize) -> (usize, usize) {
        let f = self.config.classifier_stride();
        (h / f, w / f)
    }

    fn check_input(&self, s: Shape) -> Result<()> {
        let m = self.config.size_multiple();
        if s.c != self.config.input_channels {
            return Err(Error::shape(
                "MP-Net input channels",
                s.dims(),
                self.config.input_channels,
            ));
        }
        if s.h % m != 0 || s.w % m != 0 {
            return Err(Error::invalid(format!(
                "input {}x{} is not divisible by {m}; pad it first",
                s.h, s.w
            )));
        }
        Ok(())
    }

    fn block_forward(
        b: &ConvBlock<T>,
        x: Tensor<T>,
        mode: Mode,
        tape: Option<&mut Vec<BlockTape<T>>>,
        running: &mut Vec<RunningStats<T>>,
    ) -> Result<Tensor<T>> {
        let z = conv2d(&x, &b.conv, 1, b.pad())?;
        let a = match mode {
            Mode::Eval => batchnorm_eval(&z, &b.bn)?,
            Mode::Train => {
                let (a, cache, stats) = batchnorm_train(&z, &b.bn)?;
                running.push(stats);
                if let Some(t) = tape {
                    let y = relu(&a);
                    t.push(BlockTape {
                        input: x,
                        bn: cache,
                        pre_relu: a,
                    });
                    return Ok(y);
                }
                a
            }
        };
        Ok(relu(&a))
    }

    /// Returns full-resolution logits, plus the intermediate records needed
    /// by [`Self::backward`] when `record` is set (train mode only).
    fn run(&self, x: &Tensor<T>, mode: Mode, record: bool) -> Result<(Tensor<T>, Option<Tape<T>>, Vec<RunningStats<T>>)> {
        let s = x.shape();
        self.check_input(s)?;
        let mut blocks = Vec::new();
        let mut running = Vec::new();
        let mut pools = Vec::new();
        let mut skips: Vec<Shape> = Vec::new();
        let mut skip_maps: Vec<Tensor<T>> = Vec::new();
        let num_stages = self.config.num_encoder_stages;
        let first_skip = num_stages - self.config.num_decoder_units;
        let mut h = x.clone();
        for (si, stage) in self.encoder.iter().enumerate() {
            for b in stage {
                h = Self::block_forward(b, h, mode, record.then_some(&mut blocks), &mut running)?;
            }
            skips.push(h.shape());
            let (p, idx) = maxpool2x2(&h)?;
            if si >= first_skip {
                skip_maps.push(h);
            }
            pools.push(idx);
            h = p;
        }
        let mut up_shapes = Vec::new();
        for (u, unit) in self.decoder.iter().enumerate() {
            let stage = num_stages - 1 - u;
            let skip = &skip_maps[stage - first_skip];
            let sk = skip.shape();
            up_shapes.push(h.shape());
            let up = upsample_bilinear(&h, sk.h, sk.w)?;
            h = concat_channels(&up, skip)?;
            for b in unit {
                h = Self::block_forward(b, h, mode, record.then_some(&mut blocks), &mut running)?;
            }
        }
        let low = conv2d(&h, &self.classifier, 1, 0)?;
        let low_shape = low.shape();
        let logits = upsample_bilinear(&low, s.h, s.w)?;
        let tape = record.then(|| Tape {
            blocks,
            pools,
            up_shapes,
            classifier_input: h,
            low_shape,
            skip_channels: skips.iter().map(|s| s.c).collect(),
        });
        Ok((logits, tape, running))
    }

    /// Full-resolution two-channel logits for a batch.
    pub fn logits(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        Ok(self.run(x, mode, false)?.0)
    }

    /// Logits and the moving-class probability map of one input.
    pub fn forward(&self, input: &NetworkInput, mode: Mode) -> Result<(Tensor<T>, ScalarMap)> {
        let x = input.tensor.cast::<T>();
        let logits = self.logits(&x, mode)?;
        let p = softmax_channel(&logits)?;
        let s = p.shape();
        let m = ScalarMap::from_vec(s.h, s.w, p.data().iter().map(|v| v.as_f64() as f32).collect())?;
        Ok((logits, m))
    }

    /// Eval-mode probability map of an input of any size: edge-padded up to
    /// the next multiple of the pooling factor, then cropped back.
    pub fn predict(&self, input: &NetworkInput) -> Result<ScalarMap> {
        let (h, w) = input.dims();
        let m = self.config.size_multiple();
        let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        if (ph, pw) == (h, w) {
            return Ok(self.forward(input, Mode::Eval)?.1);
        }
        let (_, p) = self.forward(&input.pad_edge(ph, pw)?, Mode::Eval)?;
        p.crop(0, 0, h, w)
    }

    /// Train-mode forward, softmax cross-entropy against `targets`
    /// (`n * h * w` labels) and backward to every parameter.
    pub fn loss_and_grads(&self, x: &Tensor<T>, targets: &[u8], ignore: Option<&[u8]>) -> Result<StepOutput<T>> {
        let (logits, tape, running) = self.run(x, Mode::Train, true)?;
        let (loss, dlogits) = softmax_xent(&logits, targets, ignore)?;
        let grads = self.backward(tape.expect("recorded"), &dlogits)?;
        Ok(StepOutput {
            loss,
            grads,
            running,
            logits,
        })
    }

    /// Backpropagates a full-resolution logit gradient.
    fn backward(&self, mut tape: Tape<T>, dlogits: &Tensor<T>) -> Result<ModelGrads<T>> {
        let mut block_grads: Vec<[Vec<T>; 4]> = Vec::new();
        let mut block_iter = tape.blocks.drain(..).rev();
        let mut block_back = |b: &ConvBlock<T>, dy: Tensor<T>, out: &mut Vec<[Vec<T>; 4]>| -> Result<Tensor<T>> {
            let t = block_iter.next().expect("one record per block");
            let da = relu_backward(&t.pre_relu, &dy)?;
            let bg = batchnorm_backward(&t.bn, &b.bn, &da)?;
            let cg = conv2d_backward(&t.input, &b.conv, 1, b.pad(), &bg.input)?;
            out.push([cg.weight.into_vec(), cg.bias, bg.gamma, bg.beta]);
            Ok(cg.input)
        };

        let dlow = upsample_bilinear_backward(tape.low_shape, dlogits)?;
        let cls = conv2d_backward(&tape.classifier_input, &self.classifier, 1, 0, &dlow)?;
        let mut dh = cls.input;

        let num_stages = self.config.num_encoder_stages;
        let mut dskips: Vec<Option<Tensor<T>>> = vec![None; num_stages];
        for (u, unit) in self.decoder.iter().enumerate().rev() {
            for b in unit.iter().rev() {
                dh = block_back(b, dh, &mut block_grads)?;
            }
            let stage = num_stages - 1 - u;
            let up_c = dh.shape().c - tape.skip_channels[stage];
            let (dup, dskip) = split_channels(&dh, up_c)?;
            dskips[stage] = Some(dskip);
            dh = upsample_bilinear_backward(tape.up_shapes[u], &dup)?;
        }
        for (si, stage) in self.encoder.iter().enumerate().rev() {
            let idx: &PoolIndices = &tape.pools[si];
            let mut d = maxpool2x2_backward(idx, &dh)?;
            if let Some(ds) = dskips[si].take() {
                for (a, b) in d.data_mut().iter_mut().zip(ds.data()) {
                    *a += *b;
                }
            }
            dh = d;
            for b in stage.iter().rev() {
                dh = block_back(b, dh, &mut block_grads)?;
            }
        }
        // block_grads were pushed in reverse parameter order
        let mut tensors = Vec::with_capacity(block_grads.len() * 4 + 2);
        for g in block_grads.into_iter().rev() {
            tensors.extend(g);
        }
        tensors.push(cls.weight.into_vec());
        tensors.push(cls.bias);
        Ok(ModelGrads { tensors })
    }
}

struct Tape<T> {
    blocks: Vec<BlockTape<T>>,
    pools: Vec<PoolIndices>,
    up_shapes: Vec<Shape>,
    classifier_input: Tensor<T>,
    low_shape: Shape,
    skip_channels: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Modality;
    use crate::tensor::gradcheck::{grad_check, GradCheckConfig};

    #[test]
    fn shapes_follow_the_resolution_chain() {
        let cfg = MpNetConfig::desk(2, 4);
        let m = MpNetModel::<f32>::build(&cfg, 1).unwrap();
        assert_eq!(m.classifier_input_size(64, 64), (32, 32));
        let x = Tensor::<f32>::full(Shape::new(1, 2, 64, 64), 0.3).unwrap();
        let input = NetworkInput::new(Modality::AngleField, x).unwrap();
        let (logits, prob) = m.forward(&input, Mode::Eval).unwrap();
        assert_eq!(logits.shape(), Shape::new(1, 2, 64, 64));
        assert_eq!(prob.dims(), (64, 64));

        let one = MpNetModel::<f32>::build(&MpNetConfig::desk(2, 1), 1).unwrap();
        assert_eq!(one.classifier_input_size(64, 64), (4, 4));
        let (_, prob) = one.forward(&input, Mode::Train).unwrap();
        assert_eq!(prob.dims(), (64, 64));
        assert!(prob.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn builds_are_deterministic() {
        let cfg = MpNetConfig::desk(2, 2);
        let a = MpNetModel::<f32>::build(&cfg, 7).unwrap();
        let b = MpNetModel::<f32>::build(&cfg, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, MpNetModel::<f32>::build(&cfg, 8).unwrap());
        assert_eq!(a.param_names().len(), a.param_slices().len());
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = MpNetModel::<f32>::build(&MpNetConfig::desk(2, 2), 0).unwrap();
        let odd = Tensor::<f32>::zeros(Shape::new(1, 2, 48, 64)).unwrap();
        assert!(m.logits(&odd, Mode::Eval).is_err());
        let wrong_c = Tensor::<f32>::zeros(Shape::new(1, 3, 64, 64)).unwrap();
        assert!(m.logits(&wrong_c, Mode::Eval).is_err());
    }

    fn tiny() -> MpNetConfig {
        MpNetConfig {
            input_channels: 2,
            num_encoder_stages: 2,
            num_decoder_units: 1,
            channels_per_stage: vec![3, 4],
            convs_per_stage: 1,
            kernel_size: 3,
        }
    }

    fn tiny_batch(seed: u64) -> (Tensor<f32>, Vec<u8>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::<f32>::random_uniform(Shape::new(2, 2, 8, 8), -1.0, 1.0, &mut rng).unwrap();
        let targets: Vec<u8> = (0..128).map(|i| ((i * 7 + i / 8) % 3 == 0) as u8).collect();
        let ignore: Vec<u8> = (0..128).map(|i| (i % 11 == 0) as u8).collect();
        (x, targets, ignore)
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let cfg = tiny();
        let (x, targets, ignore) = tiny_batch(3);
        let model = MpNetModel::<f32>::build(&cfg, 11).unwrap();
        let out = model.loss_and_grads(&x, &targets, Some(&ignore)).unwrap();
        let names = model.param_names();
        let gc = GradCheckConfig::f32().with_step(1e-3).with_samples(24);
        let mut worst = 0.0f64;
        for (t, name) in names.iter().enumerate() {
            let base = model.param_slices()[t].to_vec();
            let report = grad_check(
                |probe: &[f32]| {
                    let mut m = model.clone();
                    m.param_slices_mut()[t].copy_from_slice(probe);
                    m.loss_and_grads(&x, &targets, Some(&ignore)).unwrap().loss as f64
                },
                &base,
                &out.grads.tensors[t],
                &gc.with_seed(t as u64),
            );
            assert!(report.passes(1e-2), "{name}: {report:?}");
            worst = worst.max(report.max_rel_error);
        }
        assert!(worst < 1e-2);
    }

    #[test]
    fn grads_cover_every_parameter() {
        let (x, targets, _) = tiny_batch(4);
        let model = MpNetModel::<f64>::build(&tiny(), 2).unwrap();
        let out = model.loss_and_grads(&x.cast(), &targets, None).unwrap();
        let shapes: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
        let got: Vec<usize> = out.grads.tensors.iter().map(|g| g.len()).collect();
        assert_eq!(shapes, got);
        assert_eq!(out.running.len(), model.batchnorms().len());
    }

    /// Makes every conv left-right symmetric, except first-layer taps on the
    /// horizontal flow channel, which become antisymmetric.
    fn make_mirror_equivariant(model: &mut MpNetModel<f32>, odd_channel: usize) {
        for (li, conv) in model.convs_mut().into_iter().enumerate() {
            let s = conv.weight.shape();
            for o in 0..s.n {
                for i in 0..s.c {
                    let sign = if li == 0 && i == odd_channel { -1.0 } else { 1.0 };
                    for y in 0..s.h {
                        for x in 0..s.w {
                            let xm = s.w - 1 - x;
                            if xm < x {
                                continue;
                            }
                            let a = conv.weight.at(o, i, y, x);
                            let b = conv.weight.at(o, i, y, xm);
                            let v = 0.5 * (a + sign * b);
                            conv.weight.set(o, i, y, x, v);
                            conv.weight.set(o, i, y, xm, if xm == x { 0.5 * (a + sign * a) } else { sign * v });
                        }
                    }
                }
            }
        }
    }

    fn mirror_plane(t: &Tensor<f32>) -> Tensor<f32> {
        let s = t.shape();
        let mut out = t.clone();
        for n in 0..s.n {
            for c in 0..s.c {
                for y in 0..s.h {
                    for x in 0..s.w {
                        out.set(n, c, y, x, t.at(n, c, y, s.w - 1 - x));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn equivariant_weights_give_mirror_consistent_output() {
        let cfg = MpNetConfig::desk(2, 2);
        let mut model = MpNetModel::<f32>::build(&cfg, 5).unwrap();
        make_mirror_equivariant(&mut model, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::<f32>::random_uniform(Shape::new(1, 2, 32, 64), -1.0, 1.0, &mut rng).unwrap();
        let input = NetworkInput::new(Modality::FlowVectors, x).unwrap();
        let (la, _) = model.forward(&input, Mode::Eval).unwrap();
        let (lb, _) = model.forward(&input.mirrored(), Mode::Eval).unwrap();
        let lb = mirror_plane(&lb);
        let dev = la.data().iter().zip(lb.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(dev < 1e-4, "deviation {dev}");

        // an input equal to its own mirror image yields a symmetric map
        let sym = {
            let m = input.mirrored().tensor;
            let mut t = input.tensor.clone();
            for (a, b) in t.data_mut().iter_mut().zip(m.data()) {
                *a = 0.5 * (*a + *b);
            }
            NetworkInput::new(Modality::FlowVectors, t).unwrap()
        };
        let (_, p) = model.forward(&sym, Mode::Eval).unwrap();
        let (h, w) = p.dims();
        for y in 0..h {
            for x in 0..w {
                assert!((p.get(y, x) - p.get(y, w - 1 - x)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn eval_is_repeatable() {
        let m = MpNetModel::<f32>::build(&MpNetConfig::desk(5, 2), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::random_uniform(Shape::new(1, 5, 32, 32), 0.0, 1.0, &mut rng).unwrap();
        let input = NetworkInput::new(Modality::RgbPlusAngleField, x).unwrap();
        let (a, pa) = m.forward(&input, Mode::Eval).unwrap();
        let (b, pb) = m.forward(&input, Mode::Eval).unwrap();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }
}
