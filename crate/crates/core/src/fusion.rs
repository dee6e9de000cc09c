//! Objectness voting over proposal masks and fusion with the motion map.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::formats::{load, read_pgm_mask, write_file, write_pgm_mask};
use crate::image::{BinaryMask, MotionProbMap, ObjectnessMap, ScalarMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    pub k: f32,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams { k: 0.5 }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.k) {
            return Err(Error::invalid(format!("fusion k must lie in [0, 1], got {}", self.k)));
        }
        Ok(())
    }
}

/// Fraction of proposals covering each pixel. An empty list gives zero everywhere.
pub fn voting_objectness(proposals: &[BinaryMask], h: usize, w: usize) -> Result<ObjectnessMap> {
    let mut counts = vec![0u32; h * w];
    for (i, p) in proposals.iter().enumerate() {
        if p.dims() != (h, w) {
            return Err(Error::shape("voting_objectness", (h, w), format!("proposal {i} {:?}", p.dims())));
        }
        for (c, &v) in counts.iter_mut().zip(p.as_slice()) {
            *c += u32::from(v != 0);
        }
    }
    let total = proposals.len().max(1) as f32;
    ScalarMap::from_vec(h, w, counts.into_iter().map(|c| c as f32 / total).collect())
}

/// `p = min(m * (k + o), 1)` per pixel.
pub fn fuse(m: &MotionProbMap, o: &ObjectnessMap, fp: &FusionParams) -> Result<MotionProbMap> {
    if m.dims() != o.dims() {
        return Err(Error::shape("fuse", m.dims(), o.dims()));
    }
    fp.validate()?;
    let data = m
        .as_slice()
        .iter()
        .zip(o.as_slice())
        .map(|(&m, &o)| (m * (fp.k + o)).min(1.0))
        .collect();
    ScalarMap::from_vec(m.height(), m.width(), data)
}

/// Synthetic stand-in for a segment proposal method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalConfig {
    pub count: usize,
    /// Maximum boundary displacement in pixels (shift and grow/shrink).
    pub jitter: usize,
    /// Probability that a proposal is a random blob unrelated to any instance.
    pub distractor_frac: f64,
    /// Probability that each instance is included in a non-distractor proposal.
    pub instance_inclusion: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            count: 100,
            jitter: 2,
            distractor_frac: 0.2,
            instance_inclusion: 0.6,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("distractor_frac", self.distractor_frac), ("instance_inclusion", self.instance_inclusion)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("proposal {name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Draws `cfg.count` proposals. Each one is either a random elliptical
/// distractor or the union of a random subset of instances, shifted and
/// grown/shrunk by up to `cfg.jitter` pixels.
pub fn synth_proposals<R: Rng>(
    instances: &[BinaryMask],
    h: usize,
    w: usize,
    cfg: &ProposalConfig,
    rng: &mut R,
) -> Result<Vec<BinaryMask>> {
    cfg.validate()?;
    if let Some(bad) = instances.iter().find(|m| m.dims() != (h, w)) {
        return Err(Error::shape("synth_proposals", (h, w), bad.dims()));
    }
    let j = cfg.jitter as i64;
    let mut out = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count {
        if instances.is_empty() || rng.random_bool(cfg.distractor_frac) {
            out.push(distractor(h, w, rng)?);
            continue;
        }
        let mut union = BinaryMask::new(h, w)?;
        for inst in instances {
            if rng.random_bool(cfg.instance_inclusion) {
                union = union.union(inst)?;
            }
        }
        if j > 0 {
            let dy = rng.random_range(-j..=j);
            let dx = rng.random_range(-j..=j);
            let grow = rng.random_range(-j..=j);
            union = shift(&union, dy, dx);
            union = if grow >= 0 {
                dilate(&union, grow as usize)
            } else {
                erode(&union, (-grow) as usize)
            };
        }
        out.push(union);
    }
    Ok(out)
}

fn distractor<R: Rng>(h: usize, w: usize, rng: &mut R) -> Result<BinaryMask> {
    let cy = rng.random_range(0.0..h as f64);
    let cx = rng.random_range(0.0..w as f64);
    let ry = rng.random_range(0.05..0.25) * h as f64 + 1.0;
    let rx = rng.random_range(0.05..0.25) * w as f64 + 1.0;
    BinaryMask::from_fn(h, w, |y, x| {
        let a = (y as f64 - cy) / ry;
        let b = (x as f64 - cx) / rx;
        a * a + b * b <= 1.0
    })
}

fn shift(m: &BinaryMask, dy: i64, dx: i64) -> BinaryMask {
    let (h, w) = m.dims();
    BinaryMask::from_fn(h, w, |y, x| {
        let sy = y as i64 - dy;
        let sx = x as i64 - dx;
        sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w && m.get(sy as usize, sx as usize)
    })
    .expect("same size")
}

/// Square-window morphology; pixels outside the frame count as background.
fn window_any(m: &BinaryMask, r: usize, want: bool) -> BinaryMask {
    let (h, w) = m.dims();
    BinaryMask::from_fn(h, w, |y, x| {
        let hit = (y.saturating_sub(r)..=(y + r)).any(|yy| {
            (x.saturating_sub(r)..=(x + r)).any(|xx| {
                let v = yy < h && xx < w && m.get(yy, xx);
                v == want
            })
        });
        if want {
            hit
        } else {
            !hit && y >= r && x >= r && y + r < h && x + r < w
        }
    })
    .expect("same size")
}

fn dilate(m: &BinaryMask, r: usize) -> BinaryMask {
    if r == 0 {
        return m.clone();
    }
    window_any(m, r, true)
}

fn erode(m: &BinaryMask, r: usize) -> BinaryMask {
    if r == 0 {
        return m.clone();
    }
    window_any(m, r, false)
}

/// Writes proposals as `NNN.pgm` into `dir`.
pub fn write_proposals(dir: &Path, proposals: &[BinaryMask]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, p) in proposals.iter().enumerate() {
        write_file(&dir.join(format!("{i:03}.pgm")), &write_pgm_mask(p))?;
    }
    Ok(())
}

/// Reads every `*.pgm` in `dir`, sorted by file name. A missing directory is an error.
pub fn read_proposals(dir: &Path) -> Result<Vec<BinaryMask>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "pgm") {
            paths.push(p);
        }
    }
    paths.sort();
    paths.iter().map(|p| load(p, read_pgm_mask)).collect()
}
