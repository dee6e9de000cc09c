use mpnet_core::flow::Modality;
use mpnet_core::formats::write_file;
use mpnet_core::model::evaluate;

use super::{train_model, training_samples, Split};
use crate::config::{parse_modality, FlowSource, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;

/// One trained model scored on the same-texture and texture-shifted splits.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub modality: Modality,
    pub decoders: usize,
    pub test_iou: f64,
    pub shifted_iou: f64,
}

/// Trains one model per configured modality (plus the optional deeper
/// angle-field model) and writes `ablate.csv` and `ablate.md`.
pub fn ablate(cfg: &PipelineConfig, rec: &mut Recorder) -> CliResult<Vec<AblationRow>> {
    if !Split::TestShifted.root(cfg).is_dir() {
        return Err(CliError::missing(
            Split::TestShifted.root(cfg),
            "texture-shifted split not found (enable data.shifted_test and run gen-data)",
        ));
    }
    let mut runs: Vec<(Modality, usize)> = cfg
        .ablate
        .modalities
        .iter()
        .map(|t| Ok((parse_modality(t)?, cfg.ablate.decoders)))
        .collect::<CliResult<_>>()?;
    if cfg.ablate.deep_decoders > 0 {
        runs.push((Modality::AngleField, cfg.ablate.deep_decoders));
    }
    let mut rows = Vec::new();
    for (modality, decoders) in runs {
        let tag = format!("{}/dec{decoders}", modality.tag());
        let row = rec.time(&tag, |_| {
            let (model, report) = train_model(cfg, modality, decoders, &tag)?;
            if let Some(reason) = report.aborted {
                return Err(CliError::Numerical(format!("{tag}: training aborted: {reason}")));
            }
            let score = |split| -> CliResult<f64> {
                Ok(evaluate(&model, &training_samples(cfg, split, modality, FlowSource::GroundTruth)?)?)
            };
            Ok(AblationRow {
                modality,
                decoders,
                test_iou: score(Split::Test)?,
                shifted_iou: score(Split::TestShifted)?,
            })
        })?;
        eprintln!(
            "[ablate] {tag}: test {:.4} shifted {:.4}",
            row.test_iou, row.shifted_iou
        );
        rows.push(row);
    }
    let csv = cfg.paths.output.join("ablate.csv");
    write_file(&csv, ablation_csv(&rows).as_bytes())?;
    rec.output(&csv);
    let md = cfg.paths.output.join("ablate.md");
    write_file(&md, ablation_markdown(&rows).as_bytes())?;
    rec.output(md);
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("modality,decoders,test_iou,shifted_iou\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6}\n",
            r.modality.tag(),
            r.decoders,
            r.test_iou,
            r.shifted_iou
        ));
    }
    out
}

pub fn ablation_markdown(rows: &[AblationRow]) -> String {
    let mut out = String::from("| input | # dec. | test IoU | shifted-texture IoU |\n|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {:.1} | {:.1} |\n",
            r.modality.tag(),
            r.decoders,
            100.0 * r.test_iou,
            100.0 * r.shifted_iou
        ));
    }
    out
}
