mod ablate;
mod data;
mod overlay;
mod stages;

use std::path::{Path, PathBuf};

use mpnet_core::flow::{build_input, Modality, NetworkInput};
use mpnet_core::model::TrainSample;
use mpnet_core::synth::{list_samples, read_flow_input, read_sample, SceneSample, FLOW_INPUT_FILE};
use rayon::prelude::*;

pub use ablate::{ablate, AblationRow};
pub use data::gen_data;
pub use overlay::{overlay, overlay_files, OVERLAY_ALPHA, OVERLAY_COLOR};
pub use stages::{crf, eval, fuse, infer, train, train_model, EvalRow, Stage};

use crate::config::{FlowSource, PipelineConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    TestShifted,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::TestShifted => "test_shifted",
        }
    }

    pub fn parse(s: &str) -> CliResult<Split> {
        [Split::Train, Split::Test, Split::TestShifted]
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown split `{s}`")))
    }

    fn id(self) -> u64 {
        self as u64
    }

    pub fn root(self, cfg: &PipelineConfig) -> PathBuf {
        cfg.paths.data.join(self.name())
    }

    pub fn proposals(self, cfg: &PipelineConfig) -> PathBuf {
        cfg.paths.proposals.join(self.name())
    }
}

/// SplitMix64 over `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample folders of a split; a missing split is a missing-input error.
pub fn sample_dirs(cfg: &PipelineConfig, split: Split) -> CliResult<Vec<PathBuf>> {
    let root = split.root(cfg);
    if !root.is_dir() {
        return Err(CliError::missing(root, "dataset split not found (run gen-data)"));
    }
    Ok(list_samples(&root)?)
}

pub fn frame_name(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn network_input(dir: &Path, s: &SceneSample, modality: Modality, flow: FlowSource) -> CliResult<NetworkInput> {
    let estimated;
    let f = match flow {
        FlowSource::GroundTruth => &s.flow_gt,
        FlowSource::Input if modality.needs_flow() => {
            estimated = read_flow_input(dir)?
                .ok_or_else(|| CliError::missing(dir.join(FLOW_INPUT_FILE), "estimated flow not found"))?;
            &estimated
        }
        FlowSource::Input => &s.flow_gt,
    };
    Ok(build_input(modality, Some(&s.rgb_t), Some(&s.rgb_t1), Some(f))?)
}

/// Samples of a split encoded for `modality`, with occluded pixels ignored.
pub fn training_samples(
    cfg: &PipelineConfig,
    split: Split,
    modality: Modality,
    flow: FlowSource,
) -> CliResult<Vec<TrainSample>> {
    sample_dirs(cfg, split)?
        .par_iter()
        .map(|dir| {
            let s = read_sample(dir)?;
            let input = network_input(dir, &s, modality, flow)?;
            Ok(TrainSample::new(input, s.moving_mask, Some(s.occlusion_mask))?)
        })
        .collect()
}
