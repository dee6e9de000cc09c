use std::path::Path;

use mpnet_core::formats::{write_file, write_flo};
use mpnet_core::fusion::{synth_proposals, write_proposals};
use mpnet_core::synth::{
    corrupt_flow, derive_motion_labels, generate_scene, sample_dir, write_sample, SceneConfig, FLOW_INPUT_FILE,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{derive_seed, Split};
use crate::config::{LabelSource, PipelineConfig};
use crate::error::CliResult;
use crate::manifest::Recorder;

/// Writes `train/`, `test/` and (optionally) `test_shifted/` plus synthetic
/// proposals for the test splits.
pub fn gen_data(cfg: &PipelineConfig, rec: &mut Recorder) -> CliResult<()> {
    let mut splits = vec![(Split::Train, cfg.data.train_count), (Split::Test, cfg.data.test_count)];
    if cfg.data.shifted_test {
        splits.push((Split::TestShifted, cfg.data.test_count));
    }
    for (split, count) in splits {
        let root = split.root(cfg);
        if root.exists() {
            std::fs::remove_dir_all(&root).map_err(|e| mpnet_core::Error::io(&root, e))?;
        }
        std::fs::create_dir_all(&root).map_err(|e| mpnet_core::Error::io(&root, e))?;
        let props = split.proposals(cfg);
        if split != Split::Train && props.exists() {
            std::fs::remove_dir_all(&props).map_err(|e| mpnet_core::Error::io(&props, e))?;
        }
        let scene = cfg.scene_config(split == Split::TestShifted);
        (0..count)
            .into_par_iter()
            .map(|i| write_one(cfg, &scene, split, i, &root))
            .collect::<CliResult<Vec<()>>>()?;
        eprintln!("[gen-data] {} samples in {}", count, root.display());
        rec.output(root);
        if split != Split::Train {
            rec.output(props);
        }
    }
    Ok(())
}

fn write_one(cfg: &PipelineConfig, scene: &SceneConfig, split: Split, i: usize, root: &Path) -> CliResult<()> {
    let mut s = generate_scene(scene, derive_seed(cfg.seed, split.id(), i as u64))?;
    if cfg.labels.source == LabelSource::Geometric {
        s.moving_mask = derive_motion_labels(&s, &cfg.label_params())?;
    }
    let dir = sample_dir(root, i);
    write_sample(&dir, &s)?;
    if split == Split::Train {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 100 + split.id(), i as u64));
    if cfg.data.noisy_test_flow {
        let noisy = corrupt_flow(&s.flow_gt, &cfg.noise_config(), &mut rng)?;
        write_file(&dir.join(FLOW_INPUT_FILE), &write_flo(&noisy))?;
    }
    let (h, w) = s.dims();
    let props = synth_proposals(&s.instance_masks, h, w, &cfg.proposal_config(), &mut rng)?;
    write_proposals(&split.proposals(cfg).join(format!("{i:06}")), &props)?;
    Ok(())
}
