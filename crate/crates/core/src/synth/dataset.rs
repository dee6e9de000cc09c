//! Dataset directories: one numbered folder per sample.
//!
//! ```text
//! 000000/rgb_t.ppm rgb_t1.ppm      frames
//!        flow.flo                  ground-truth flow t -> t+1
//!        flow_in.flo               optional estimated (noisy) flow
//!        disp_t.pfm disp_t1.pfm    disparities
//!        camera.txt                two lines: camera t, camera t+1
//!        moving.pgm occlusion.pgm stuff.pgm
//!        instance_00.pgm ...       one mask per object
//!        meta.txt                  seed, object count, motion flags
//! ```

use std::path::{Path, PathBuf};

use super::camera::CameraParams;
use super::scene::SceneSample;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::formats::{
    load, read_flo, read_pfm, read_pgm_mask, read_ppm, write_file, write_flo, write_pfm, write_pgm_mask, write_ppm,
};

pub const FLOW_INPUT_FILE: &str = "flow_in.flo";

pub fn sample_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("{index:06}"))
}

pub fn camera_text(cam_t: &CameraParams, cam_t1: &CameraParams) -> String {
    format!("{cam_t}\n{cam_t1}\n")
}

pub fn parse_camera_text(text: &str) -> Result<(CameraParams, CameraParams)> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).collect();
    if lines.len() != 2 {
        return Err(Error::format("camera", format!("expected 2 camera lines, found {}", lines.len())));
    }
    Ok((lines[0].parse()?, lines[1].parse()?))
}

fn meta_text(s: &SceneSample) -> String {
    let flags: Vec<&str> = s.object_moving.iter().map(|&m| if m { "1" } else { "0" }).collect();
    format!("seed={}\nobjects={}\nmoving={}\n", s.seed, s.object_moving.len(), flags.join(","))
}

fn parse_meta(text: &str) -> Result<(u64, Vec<bool>)> {
    let bad = |m: String| Error::format("meta", m);
    let (mut seed, mut objects, mut moving) = (None, None, None);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
        match k.trim() {
            "seed" => seed = Some(v.trim().parse::<u64>().map_err(|_| bad(format!("bad seed {v:?}")))?),
            "objects" => objects = Some(v.trim().parse::<usize>().map_err(|_| bad(format!("bad count {v:?}")))?),
            "moving" => {
                let v = v.trim();
                moving = Some(if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|f| match f.trim() {
                            "1" => Ok(true),
                            "0" => Ok(false),
                            o => Err(bad(format!("bad motion flag {o:?}"))),
                        })
                        .collect::<Result<Vec<_>>>()?
                });
            }
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    let objects = objects.ok_or_else(|| bad("missing objects".into()))?;
    let moving = moving.ok_or_else(|| bad("missing moving".into()))?;
    if moving.len() != objects {
        return Err(bad(format!("{objects} objects but {} motion flags", moving.len())));
    }
    Ok((seed.ok_or_else(|| bad("missing seed".into()))?, moving))
}

pub fn write_sample(dir: &Path, s: &SceneSample) -> Result<()> {
    write_file(&dir.join("rgb_t.ppm"), &write_ppm(&s.rgb_t))?;
    write_file(&dir.join("rgb_t1.ppm"), &write_ppm(&s.rgb_t1))?;
    write_file(&dir.join("flow.flo"), &write_flo(&s.flow_gt))?;
    write_file(&dir.join("disp_t.pfm"), &write_pfm(&s.disparity_t))?;
    write_file(&dir.join("disp_t1.pfm"), &write_pfm(&s.disparity_t1))?;
    write_file(&dir.join("camera.txt"), camera_text(&s.cam_t, &s.cam_t1).as_bytes())?;
    write_file(&dir.join("moving.pgm"), &write_pgm_mask(&s.moving_mask))?;
    write_file(&dir.join("occlusion.pgm"), &write_pgm_mask(&s.occlusion_mask))?;
    write_file(&dir.join("stuff.pgm"), &write_pgm_mask(&s.stuff_mask))?;
    for (k, m) in s.instance_masks.iter().enumerate() {
        write_file(&dir.join(format!("instance_{k:02}.pgm")), &write_pgm_mask(m))?;
    }
    write_file(&dir.join("meta.txt"), meta_text(s).as_bytes())
}

pub fn read_sample(dir: &Path) -> Result<SceneSample> {
    let text = |name: &str| -> Result<String> {
        let p = dir.join(name);
        load(&p, |b| {
            String::from_utf8(b.to_vec()).map_err(|_| Error::format("text", "not valid UTF-8"))
        })
    };
    let cam_path = dir.join("camera.txt");
    let (cam_t, cam_t1) = parse_camera_text(&text("camera.txt")?)
        .map_err(|e| Error::format("camera", format!("{}: {e}", cam_path.display())))?;
    let meta_path = dir.join("meta.txt");
    let (seed, object_moving) =
        parse_meta(&text("meta.txt")?).map_err(|e| Error::format("meta", format!("{}: {e}", meta_path.display())))?;
    let instance_masks = (0..object_moving.len())
        .map(|k| load(&dir.join(format!("instance_{k:02}.pgm")), read_pgm_mask))
        .collect::<Result<Vec<_>>>()?;
    let s = SceneSample {
        rgb_t: load(&dir.join("rgb_t.ppm"), read_ppm)?,
        rgb_t1: load(&dir.join("rgb_t1.ppm"), read_ppm)?,
        flow_gt: load(&dir.join("flow.flo"), read_flo)?,
        disparity_t: load(&dir.join("disp_t.pfm"), read_pfm)?,
        disparity_t1: load(&dir.join("disp_t1.pfm"), read_pfm)?,
        cam_t,
        cam_t1,
        instance_masks,
        object_moving,
        stuff_mask: load(&dir.join("stuff.pgm"), read_pgm_mask)?,
        moving_mask: load(&dir.join("moving.pgm"), read_pgm_mask)?,
        occlusion_mask: load(&dir.join("occlusion.pgm"), read_pgm_mask)?,
        seed,
    };
    let dims = s.moving_mask.dims();
    let sizes = [
        ("rgb_t.ppm", s.rgb_t.dims()),
        ("rgb_t1.ppm", s.rgb_t1.dims()),
        ("flow.flo", s.flow_gt.dims()),
        ("disp_t.pfm", s.disparity_t.dims()),
        ("disp_t1.pfm", s.disparity_t1.dims()),
        ("occlusion.pgm", s.occlusion_mask.dims()),
        ("stuff.pgm", s.stuff_mask.dims()),
    ];
    for (name, d) in sizes {
        if d != dims {
            return Err(Error::format(
                "dataset",
                format!("{}: size {d:?} differs from moving.pgm {dims:?}", dir.join(name).display()),
            ));
        }
    }
    Ok(s)
}

/// Estimated flow stored next to a sample, if present.
pub fn read_flow_input(dir: &Path) -> Result<Option<FlowField>> {
    let p = dir.join(FLOW_INPUT_FILE);
    if p.exists() {
        load(&p, read_flo).map(Some)
    } else {
        Ok(None)
    }
}

pub fn write_dataset(samples: &[SceneSample], root: &Path) -> Result<()> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for (i, s) in samples.iter().enumerate() {
        write_sample(&sample_dir(root, i), s)?;
    }
    Ok(())
}

/// Numbered sample folders under `root`, in index order.
pub fn list_samples(root: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs: Vec<(usize, PathBuf)> = Vec::new();
    for e in entries {
        let e = e.map_err(|e| Error::io(root, e))?;
        let name = e.file_name();
        let Some(name) = name.to_str() else { continue };
        if let (true, Ok(i)) = (e.path().is_dir(), name.parse::<usize>()) {
            dirs.push((i, e.path()));
        }
    }
    dirs.sort();
    Ok(dirs.into_iter().map(|(_, p)| p).collect())
}

pub fn read_dataset(root: &Path) -> Result<Vec<SceneSample>> {
    list_samples(root)?.iter().map(|d| read_sample(d)).collect()
}
