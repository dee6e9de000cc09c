use std::path::{Path, PathBuf};

use mpnet_core::crf::{binarize, make_unary, mean_field};
use mpnet_core::flow::Modality;
use mpnet_core::formats::{load, read_pfm, read_pgm_mask, read_ppm, write_file, write_pfm, write_pgm_mask};
use mpnet_core::fusion::{fuse as fuse_maps, read_proposals, voting_objectness};
use mpnet_core::metrics::{aggregate_csv, frame_scores_csv, sequence_stats, SequenceScores};
use mpnet_core::model::{load_weights, save_weights, train as train_net, MpNetModel, TrainReport};
use mpnet_core::synth::read_sample;
use mpnet_core::MotionProbMap;
use rayon::prelude::*;

use super::{frame_name, network_input, sample_dirs, training_samples, Split};
use crate::config::{FlowSource, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;

/// Stage outputs under `<output>/`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Network motion probability.
    Motion,
    /// After objectness fusion.
    Fused,
    /// After CRF refinement.
    Crf,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Motion, Stage::Fused, Stage::Crf];

    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Motion => "m",
            Stage::Fused => "p",
            Stage::Crf => "crf",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Stage::Motion => "mpnet",
            Stage::Fused => "mpnet+obj",
            Stage::Crf => "mpnet+obj+crf",
        }
    }

    pub fn dir(self, cfg: &PipelineConfig) -> PathBuf {
        cfg.paths.output.join(self.dir_name())
    }
}

fn infer_split(cfg: &PipelineConfig) -> CliResult<Split> {
    Split::parse(&cfg.infer.split)
}

fn frames_of(dir: &Path, ext: &str, what: &str) -> CliResult<Vec<String>> {
    if !dir.is_dir() {
        return Err(CliError::missing(dir, format!("{what} not found")));
    }
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| mpnet_core::Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let p = e.path();
            if p.extension()? != ext {
                return None;
            }
            Some(p.file_stem()?.to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    Ok(names)
}

fn reset_dir(dir: &Path) -> CliResult<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| mpnet_core::Error::io(dir, e))?;
    }
    std::fs::create_dir_all(dir).map_err(|e| mpnet_core::Error::io(dir, e))?;
    Ok(())
}

/// Trains on the train split (ground-truth flow), validating on the test split when present.
pub fn train_model(
    cfg: &PipelineConfig,
    modality: Modality,
    decoders: usize,
    tag: &str,
) -> CliResult<(MpNetModel<f32>, TrainReport)> {
    let data = training_samples(cfg, Split::Train, modality, FlowSource::GroundTruth)?;
    if data.is_empty() {
        return Err(CliError::missing(Split::Train.root(cfg), "training split holds no samples"));
    }
    let val = if Split::Test.root(cfg).is_dir() {
        training_samples(cfg, Split::Test, modality, FlowSource::GroundTruth)?
    } else {
        Vec::new()
    };
    let mc = mpnet_core::model::MpNetConfig {
        num_decoder_units: decoders,
        ..cfg.model_config(modality)
    };
    mc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut model = MpNetModel::<f32>::build(&mc, cfg.seed)?;
    let tc = cfg.train_config();
    let report = train_net(&mut model, &data, &val, &tc, |e| {
        let val = e.val_iou.map(|v| format!(" val_iou {v:.4}")).unwrap_or_default();
        eprintln!(
            "[{tag}] epoch {}/{} lr {:.5} loss {:.4} train_iou {:.4}{val}",
            e.epoch, tc.epochs, e.lr, e.loss, e.train_iou
        );
    })?;
    Ok((model, report))
}

pub fn train(cfg: &PipelineConfig, rec: &mut Recorder) -> CliResult<TrainReport> {
    let modality = cfg.modality()?;
    let (model, report) = train_model(cfg, modality, cfg.model.decoders, "train")?;
    let log = cfg.paths.output.join("train_log.csv");
    write_file(&log, report.to_csv().as_bytes())?;
    rec.output(&log);
    if let Some(reason) = &report.aborted {
        return Err(CliError::Numerical(format!("training aborted: {reason}; weights not written")));
    }
    write_file(&cfg.paths.weights, &save_weights(&model))?;
    rec.output(&cfg.paths.weights);
    Ok(report)
}

pub fn load_model(cfg: &PipelineConfig) -> CliResult<MpNetModel<f32>> {
    let path = &cfg.paths.weights;
    if !path.is_file() {
        return Err(CliError::missing(path, "weights not found (run train)"));
    }
    let mc = cfg.model_config(cfg.modality()?);
    Ok(load(path, |b| load_weights(b, &mc))?)
}

/// Writes `<output>/m/NNNNNN.pfm` for every frame of the configured split.
pub fn infer(cfg: &PipelineConfig, rec: &mut Recorder) -> CliResult<Vec<String>> {
    let model = load_model(cfg)?;
    let modality = cfg.modality()?;
    let dirs = sample_dirs(cfg, infer_split(cfg)?)?;
    let out = Stage::Motion.dir(cfg);
    reset_dir(&out)?;
    let names = dirs
        .par_iter()
        .map(|dir| {
            let s = read_sample(dir)?;
            let input = network_input(dir, &s, modality, cfg.infer.flow)?;
            let m = model.predict(&input)?;
            if m.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(CliError::Numerical(format!("non-finite motion map for {}", dir.display())));
            }
            let name = frame_name(dir);
            write_file(&out.join(format!("{name}.pfm")), &write_pfm(&m))?;
            Ok(name)
        })
        .collect::<CliResult<Vec<_>>>()?;
    eprintln!("[infer] {} frames -> {}", names.len(), out.display());
    rec.output(out);
    Ok(names)
}

fn read_map(path: &Path) -> CliResult<MotionProbMap> {
    let m = load(path, read_pfm)?;
    m.check_unit_range(&path.display().to_string())?;
    Ok(m)
}

/// `p = min(m (k + o), 1)` with objectness voted from the split's proposals.
pub fn fuse(cfg: &PipelineConfig, rec: &mut Recorder) -> CliResult<()> {
    let src = Stage::Motion.dir(cfg);
    let names = frames_of(&src, "pfm", "motion maps (run infer)")?;
    let out = Stage::Fused.dir(cfg);
    reset_dir(&out)?;
    let props_root = infer_split(cfg)?.proposals(cfg);
    let fp = cfg.fusion_params();
    names
        .par_iter()
        .map(|name| {
            let m = read_map(&src.join(format!("{name}.pfm")))?;
            let p = if cfg.fusion.enabled {
                let dir = props_root.join(name);
                if !dir.is_dir() {
                    return Err(CliError::missing(dir, "proposal folder not found"));
                }
                let (h, w) = m.dims();
                let o = voting_objectness(&read_proposals(&dir)?, h, w)?;
                fuse_maps(&m, &o, &fp)?
            } else {
                m
            };
            write_file(&out.join(format!("{name}.pfm")), &write_pfm(&p))?;
            Ok(())
        })
        .collect::<CliResult<Vec<()>>>()?;
    eprintln!("[fuse] {} frames -> {}", names.len(), out.display());
    rec.output(out);
    Ok(())
}

/// Mean-field refinement of the fused maps; also writes thresholded masks.
pub fn crf(cfg: &PipelineConfig, rec: &mut Recorder) -> CliResult<()> {
    let src = Stage::Fused.dir(cfg);
    let names = frames_of(&src, "pfm", "fused maps (run fuse)")?;
    let out = Stage::Crf.dir(cfg);
    let masks = cfg.paths.output.join("masks");
    reset_dir(&out)?;
    reset_dir(&masks)?;
    let data_root = infer_split(cfg)?.root(cfg);
    let params = cfg.crf_params();
    names
        .par_iter()
        .map(|name| {
            let p = read_map(&src.join(format!("{name}.pfm")))?;
            let rgb = load(&data_root.join(name).join("rgb_t.ppm"), read_ppm)?;
            let u = make_unary(&p, cfg.crf.unary_floor)?;
            let q = mean_field(&u, &rgb, &params, cfg.crf_mode())?;
            if q.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(CliError::Numerical(format!("non-finite CRF marginals for frame {name}")));
            }
            write_file(&out.join(format!("{name}.pfm")), &write_pfm(&q))?;
            write_file(&masks.join(format!("{name}.pgm")), &write_pgm_mask(&binarize(&q, cfg.metrics.threshold)?))?;
            Ok(())
        })
        .collect::<CliResult<Vec<()>>>()?;
    eprintln!("[crf] {} frames -> {}", names.len(), out.display());
    rec.output(out);
    rec.output(masks);
    Ok(())
}

/// Aggregate scores of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub stage: Stage,
    pub frames: usize,
    pub j_mean: f64,
    pub f_mean: f64,
}

/// Scores every stage whose maps exist against the split's `moving.pgm`.
pub fn eval(cfg: &PipelineConfig, rec: &mut Recorder) -> CliResult<Vec<EvalRow>> {
    let split = infer_split(cfg)?;
    let data_root = split.root(cfg);
    let eval_dir = cfg.paths.output.join("eval");
    let mut rows = Vec::new();
    let mut summary = String::from("stage,frames,J_mean,J_recall,J_decay,F_mean,F_recall,F_decay\n");
    for stage in Stage::ALL {
        let dir = stage.dir(cfg);
        if !dir.is_dir() {
            continue;
        }
        let names = frames_of(&dir, "pfm", "stage maps")?;
        let masks = names
            .par_iter()
            .map(|name| {
                let p = read_map(&dir.join(format!("{name}.pfm")))?;
                let gt = load(&data_root.join(name).join("moving.pgm"), read_pgm_mask)?;
                Ok((binarize(&p, cfg.metrics.threshold)?, gt))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let mut seq = SequenceScores::new(split.name());
        for (pred, gt) in &masks {
            seq.push(pred, gt)?;
        }
        let frames_csv = eval_dir.join(format!("{}_frames.csv", stage.dir_name()));
        write_file(&frames_csv, frame_scores_csv(std::slice::from_ref(&seq)).as_bytes())?;
        rec.output(&frames_csv);
        if seq.j.is_empty() {
            continue;
        }
        let agg = aggregate_csv(std::slice::from_ref(&seq))?;
        let all = agg.lines().find(|l| l.starts_with("all,")).expect("aggregate has an all row");
        summary.push_str(&format!("{}{}\n", stage.label(), &all[3..]));
        let j = sequence_stats(&seq.j)?;
        let f = sequence_stats(&seq.f)?;
        eprintln!("[eval] {:<14} J {:.4}  F {:.4}  ({} frames)", stage.label(), j.mean, f.mean, seq.j.len());
        rows.push(EvalRow {
            stage,
            frames: seq.j.len(),
            j_mean: j.mean,
            f_mean: f.mean,
        });
    }
    if rows.is_empty() {
        return Err(CliError::missing(Stage::Motion.dir(cfg), "no stage maps to evaluate (run infer)"));
    }
    let path = eval_dir.join("summary.csv");
    write_file(&path, summary.as_bytes())?;
    rec.output(path);
    Ok(rows)
}
