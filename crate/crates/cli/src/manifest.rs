use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Written once per command to `<output>/manifest-<command>.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub threads: usize,
    pub deterministic: bool,
    pub outputs: Vec<String>,
    pub stages: Vec<StageTiming>,
    pub config: PipelineConfig,
}

impl RunManifest {
    pub fn path(output: &Path, command: &str) -> PathBuf {
        output.join(format!("manifest-{command}.toml"))
    }
}

/// Collects timings and written files while a command runs.
#[derive(Debug)]
pub struct Recorder {
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new() -> Self {
        Recorder {
            stages: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> CliResult<T>) -> CliResult<T> {
        let t = Instant::now();
        let out = f(self)?;
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    pub fn output(&mut self, p: impl Into<PathBuf>) {
        self.outputs.push(p.into());
    }

    pub fn finish(self, command: &str, cfg: &PipelineConfig, threads: usize, deterministic: bool) -> CliResult<PathBuf> {
        let mut outputs: Vec<String> = self.outputs.iter().map(|p| p.display().to_string()).collect();
        outputs.sort();
        outputs.dedup();
        let m = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads,
            deterministic,
            outputs,
            stages: self.stages,
            config: cfg.clone(),
        };
        let path = RunManifest::path(&cfg.paths.output, command);
        let text = toml::to_string(&m).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        mpnet_core::formats::write_file(&path, text.as_bytes())?;
        Ok(path)
    }
}

impl Default for Recorder {
    fn default() -> Self {
        Self::new()
    }
}
