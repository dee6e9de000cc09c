//! Pipeline configuration: a TOML file with one table per stage.
//!
//! Every key is optional and defaults to the desk preset; unknown keys are
//! rejected. `mpnet show-config` prints the effective configuration, which
//! parses back to the same value.

use std::path::PathBuf;

use mpnet_core::crf::{CrfParams, FilterMode};
use mpnet_core::flow::Modality;
use mpnet_core::fusion::{FusionParams, ProposalConfig};
use mpnet_core::model::{MpNetConfig, TrainConfig};
use mpnet_core::synth::{FlowNoiseConfig, LabelGenParams, SceneConfig, StuffConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub data: DataSection,
    pub noise: NoiseSection,
    pub labels: LabelSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub infer: InferSection,
    pub proposals: ProposalSection,
    pub fusion: FusionSection,
    pub crf: CrfSection,
    pub metrics: MetricSection,
    pub ablate: AblateSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            data: DataSection::default(),
            noise: NoiseSection::default(),
            labels: LabelSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            infer: InferSection::default(),
            proposals: ProposalSection::default(),
            fusion: FusionSection::default(),
            crf: CrfSection::default(),
            metrics: MetricSection::default(),
            ablate: AblateSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Dataset root holding `train/`, `test/` and `test_shifted/`.
    pub data: PathBuf,
    pub weights: PathBuf,
    /// Per-frame proposal folders for the evaluated split.
    pub proposals: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data: "runs/data".into(),
            weights: "runs/model.mpnetw".into(),
            proposals: "runs/proposals".into(),
            output: "runs/out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train_count: usize,
    pub test_count: usize,
    pub height: usize,
    pub width: usize,
    /// Also write a test split with swapped texture palettes.
    pub shifted_test: bool,
    /// Write corrupted flow (`flow_in.flo`) next to the test samples.
    pub noisy_test_flow: bool,
    /// Add a moving non-object band to every scene.
    pub stuff: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            train_count: 500,
            test_count: 50,
            height: 64,
            width: 64,
            shifted_test: true,
            noisy_test_flow: true,
            stuff: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub blur_sigma: f64,
    pub smooth_noise: f64,
    pub outliers_min: usize,
    pub outliers_max: usize,
    pub outlier_radius_min: f64,
    pub outlier_radius_max: f64,
    pub outlier_magnitude_min: f64,
    pub outlier_magnitude_max: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = FlowNoiseConfig::default();
        NoiseSection {
            blur_sigma: n.blur_sigma,
            smooth_noise: n.smooth_noise,
            outliers_min: n.outliers.0,
            outliers_max: n.outliers.1,
            outlier_radius_min: n.outlier_radius_px.0,
            outlier_radius_max: n.outlier_radius_px.1,
            outlier_magnitude_min: n.outlier_magnitude.0,
            outlier_magnitude_max: n.outlier_magnitude.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// Motion flags recorded by the generator.
    Generator,
    /// Labels derived from flow, disparity and cameras.
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSection {
    pub source: LabelSource,
    pub eps_motion: f64,
    pub layer_tolerance: f64,
}

impl Default for LabelSection {
    fn default() -> Self {
        let g = LabelGenParams::default();
        LabelSection {
            source: LabelSource::Generator,
            eps_motion: g.eps_motion,
            layer_tolerance: g.layer_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub modality: String,
    pub stages: usize,
    pub decoders: usize,
    pub widths: Vec<usize>,
    pub convs_per_stage: usize,
    pub kernel_size: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = MpNetConfig::desk(2, 2);
        ModelSection {
            modality: Modality::AngleField.tag().into(),
            stages: m.num_encoder_stages,
            decoders: m.num_decoder_units,
            widths: m.channels_per_stage,
            convs_per_stage: m.convs_per_stage,
            kernel_size: m.kernel_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub step_every: usize,
    pub step_factor: f64,
    pub crop: usize,
    pub mirror_prob: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::desk();
        TrainSection {
            batch_size: t.batch_size,
            lr: t.lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            epochs: t.epochs,
            step_every: t.step_every,
            step_factor: t.step_factor,
            crop: t.crop,
            mirror_prob: t.mirror_prob,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowSource {
    /// `flow_in.flo`, the estimated flow.
    Input,
    /// `flow.flo`.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferSection {
    /// Split evaluated by infer, fuse, crf and eval.
    pub split: String,
    pub flow: FlowSource,
}

impl Default for InferSection {
    fn default() -> Self {
        InferSection {
            split: "test".into(),
            flow: FlowSource::Input,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalSection {
    pub count: usize,
    pub jitter: usize,
    pub distractor_frac: f64,
    pub instance_inclusion: f64,
}

impl Default for ProposalSection {
    fn default() -> Self {
        let p = ProposalConfig::default();
        ProposalSection {
            count: p.count,
            jitter: p.jitter,
            distractor_frac: p.distractor_frac,
            instance_inclusion: p.instance_inclusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    /// When false, `fuse` copies the motion map unchanged.
    pub enabled: bool,
    pub k: f32,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            enabled: true,
            k: FusionParams::default().k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrfMode {
    Naive,
    Lattice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfSection {
    pub mode: CrfMode,
    pub w_app: f64,
    pub theta_alpha: f64,
    pub theta_beta: f64,
    pub w_smooth: f64,
    pub theta_gamma: f64,
    pub iterations: usize,
    pub unary_floor: f64,
}

impl Default for CrfSection {
    fn default() -> Self {
        let c = CrfParams::default();
        CrfSection {
            mode: CrfMode::Lattice,
            w_app: c.w_app,
            theta_alpha: c.theta_alpha,
            theta_beta: c.theta_beta,
            w_smooth: c.w_smooth,
            theta_gamma: c.theta_gamma,
            iterations: c.iterations,
            unary_floor: mpnet_core::crf::DEFAULT_UNARY_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSection {
    /// Probability above which a pixel counts as moving.
    pub threshold: f32,
}

impl Default for MetricSection {
    fn default() -> Self {
        MetricSection { threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub modalities: Vec<String>,
    /// Decoder units of the per-modality models.
    pub decoders: usize,
    /// Also train an angle-field model with this many decoders for the depth comparison; 0 skips it.
    pub deep_decoders: usize,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            modalities: [Modality::RgbSingle, Modality::RgbPair, Modality::AngleField]
                .iter()
                .map(|m| m.tag().to_string())
                .collect(),
            decoders: 1,
            deep_decoders: 4,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let cfg = |e: mpnet_core::Error| CliError::Config(e.to_string());
        self.scene_config(false).validate().map_err(cfg)?;
        self.noise_config().validate().map_err(cfg)?;
        self.model_config(self.modality()?).validate().map_err(cfg)?;
        self.train_config().validate().map_err(cfg)?;
        self.proposal_config().validate().map_err(cfg)?;
        self.fusion_params().validate().map_err(cfg)?;
        self.crf_params().validate().map_err(cfg)?;
        for m in &self.ablate.modalities {
            parse_modality(m)?;
        }
        if self.ablate.decoders == 0 {
            return Err(CliError::Config("ablate.decoders must be positive".into()));
        }
        if !(self.metrics.threshold > 0.0 && self.metrics.threshold < 1.0) {
            return Err(CliError::Config(format!("metrics.threshold must lie in (0, 1), got {}", self.metrics.threshold)));
        }
        if !(self.crf.unary_floor > 0.0 && self.crf.unary_floor < 0.5) {
            return Err(CliError::Config(format!("crf.unary_floor must lie in (0, 0.5), got {}", self.crf.unary_floor)));
        }
        if !["train", "test", "test_shifted"].contains(&self.infer.split.as_str()) {
            return Err(CliError::Config(format!(
                "infer.split must be train, test or test_shifted, got `{}`",
                self.infer.split
            )));
        }
        Ok(())
    }

    pub fn modality(&self) -> CliResult<Modality> {
        parse_modality(&self.model.modality)
    }

    pub fn scene_config(&self, shifted: bool) -> SceneConfig {
        let base = SceneConfig::desk();
        let sx = self.data.width as f64 / base.width as f64;
        let sy = self.data.height as f64 / base.height as f64;
        let s = sx.min(sy);
        SceneConfig {
            height: self.data.height,
            width: self.data.width,
            focal: base.focal * s,
            object_radius_px: (base.object_radius_px.0 * s, base.object_radius_px.1 * s),
            texture_period_px: (base.texture_period_px.0 * s, base.texture_period_px.1 * s),
            texture: if shifted {
                mpnet_core::synth::TextureFamily::Shifted
            } else {
                mpnet_core::synth::TextureFamily::Standard
            },
            stuff: self.data.stuff.then(StuffConfig::default),
            ..base
        }
    }

    pub fn noise_config(&self) -> FlowNoiseConfig {
        let n = &self.noise;
        FlowNoiseConfig {
            blur_sigma: n.blur_sigma,
            smooth_noise: n.smooth_noise,
            outliers: (n.outliers_min, n.outliers_max),
            outlier_radius_px: (n.outlier_radius_min, n.outlier_radius_max),
            outlier_magnitude: (n.outlier_magnitude_min, n.outlier_magnitude_max),
        }
    }

    pub fn label_params(&self) -> LabelGenParams {
        LabelGenParams {
            eps_motion: self.labels.eps_motion,
            layer_tolerance: self.labels.layer_tolerance,
        }
    }

    pub fn model_config(&self, modality: Modality) -> MpNetConfig {
        MpNetConfig {
            input_channels: modality.channels(),
            num_encoder_stages: self.model.stages,
            num_decoder_units: self.model.decoders,
            channels_per_stage: self.model.widths.clone(),
            convs_per_stage: self.model.convs_per_stage,
            kernel_size: self.model.kernel_size,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            lr: t.lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            epochs: t.epochs,
            step_every: t.step_every,
            step_factor: t.step_factor,
            crop: t.crop,
            mirror_prob: t.mirror_prob,
            seed: self.seed,
        }
    }

    pub fn proposal_config(&self) -> ProposalConfig {
        let p = &self.proposals;
        ProposalConfig {
            count: p.count,
            jitter: p.jitter,
            distractor_frac: p.distractor_frac,
            instance_inclusion: p.instance_inclusion,
        }
    }

    pub fn fusion_params(&self) -> FusionParams {
        FusionParams { k: self.fusion.k }
    }

    pub fn crf_params(&self) -> CrfParams {
        let c = &self.crf;
        CrfParams {
            w_app: c.w_app,
            theta_alpha: c.theta_alpha,
            theta_beta: c.theta_beta,
            w_smooth: c.w_smooth,
            theta_gamma: c.theta_gamma,
            iterations: c.iterations,
        }
    }

    pub fn crf_mode(&self) -> FilterMode {
        match self.crf.mode {
            CrfMode::Naive => FilterMode::Naive,
            CrfMode::Lattice => FilterMode::Lattice,
        }
    }
}

pub fn parse_modality(tag: &str) -> CliResult<Modality> {
    tag.parse().map_err(|e: mpnet_core::Error| CliError::Config(e.to_string()))
}
