//! `mpnet`: data generation, training, inference, objectness fusion, CRF
//! refinement, evaluation and ablation for motion pattern segmentation.
//!
//! Each stage reads and writes plain files under the configured paths, so
//! stages can be run one at a time or chained with `mpnet pipeline`.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
pub use manifest::{Recorder, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "mpnet", version, about = "Motion pattern segmentation pipeline")]
pub struct Cli {
    /// TOML configuration (a run manifest is accepted too).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for per-frame stages (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Single worker thread.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic train/test splits and test proposals.
    GenData {
        #[arg(long)]
        train_count: Option<usize>,
        #[arg(long)]
        test_count: Option<usize>,
    },
    /// Train MP-Net on the train split.
    Train,
    /// Write motion probability maps for the inference split.
    Infer,
    /// Fuse motion maps with proposal objectness.
    Fuse,
    /// Refine fused maps with the dense CRF and write masks.
    Crf,
    /// Score every available stage against ground truth.
    Eval,
    /// Input-modality comparison on the same-texture and shifted splits.
    Ablate,
    /// Blend a mask over a frame.
    Overlay {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// gen-data, train, infer, fuse, crf and eval in sequence.
    Pipeline {
        /// Reuse the existing dataset.
        #[arg(long)]
        skip_data: bool,
        /// Reuse the existing weights.
        #[arg(long)]
        skip_train: bool,
    },
    /// Print the effective configuration.
    ShowConfig,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData { .. } => "gen-data",
            Command::Train => "train",
            Command::Infer => "infer",
            Command::Fuse => "fuse",
            Command::Crf => "crf",
            Command::Eval => "eval",
            Command::Ablate => "ablate",
            Command::Overlay { .. } => "overlay",
            Command::Pipeline { .. } => "pipeline",
            Command::ShowConfig => "show-config",
        }
    }
}

/// Reads a configuration file, or the `[config]` table of a run manifest.
pub fn load_config(path: &Path) -> CliResult<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::missing(path, "configuration file not found"),
        _ => CliError::Core(mpnet_core::Error::io(path, e)),
    })?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    if table.contains_key("command") {
        if let Some(toml::Value::Table(inner)) = table.get("config") {
            return PipelineConfig::parse(&toml::to_string(inner).map_err(|e| CliError::Config(e.to_string()))?);
        }
    }
    PipelineConfig::parse(&text)
}

/// Effective configuration after global flags and command overrides.
pub fn resolve_config(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Command::GenData { train_count, test_count } = &cli.command {
        if let Some(n) = train_count {
            cfg.data.train_count = *n;
        }
        if let Some(n) = test_count {
            cfg.data.test_count = *n;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command and writes its manifest; returns the manifest path.
pub fn run(cli: &Cli) -> CliResult<Option<PathBuf>> {
    let cfg = resolve_config(cli)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.to_toml());
        return Ok(None);
    }
    let threads = match (cli.deterministic, cli.threads) {
        (true, _) => 1,
        (false, Some(0)) => return Err(CliError::Config("--threads must be positive".into())),
        (false, Some(n)) => n,
        (false, None) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let mut rec = Recorder::new();
    pool.install(|| dispatch(&cli.command, &cfg, &mut rec))?;
    rec.finish(cli.command.name(), &cfg, threads, cli.deterministic).map(Some)
}

fn dispatch(command: &Command, cfg: &PipelineConfig, rec: &mut Recorder) -> CliResult<()> {
    use commands as c;
    match command {
        Command::GenData { .. } => rec.time("gen-data", |r| c::gen_data(cfg, r)),
        Command::Train => rec.time("train", |r| c::train(cfg, r).map(drop)),
        Command::Infer => rec.time("infer", |r| c::infer(cfg, r).map(drop)),
        Command::Fuse => rec.time("fuse", |r| c::fuse(cfg, r)),
        Command::Crf => rec.time("crf", |r| c::crf(cfg, r)),
        Command::Eval => rec.time("eval", |r| c::eval(cfg, r).map(drop)),
        Command::Ablate => c::ablate(cfg, rec).map(drop),
        Command::Overlay { mask, rgb, out } => rec.time("overlay", |r| c::overlay_files(mask, rgb, out, r)),
        Command::Pipeline { skip_data, skip_train } => {
            if !skip_data {
                rec.time("gen-data", |r| c::gen_data(cfg, r))?;
            }
            if !skip_train {
                rec.time("train", |r| c::train(cfg, r).map(drop))?;
            }
            rec.time("infer", |r| c::infer(cfg, r).map(drop))?;
            rec.time("fuse", |r| c::fuse(cfg, r))?;
            rec.time("crf", |r| c::crf(cfg, r))?;
            rec.time("eval", |r| c::eval(cfg, r).map(drop))
        }
        Command::ShowConfig => Ok(()),
    }
}
