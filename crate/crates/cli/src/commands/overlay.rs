use std::path::Path;

use mpnet_core::formats::{load, read_pgm_mask, read_ppm, write_file, write_ppm};
use mpnet_core::{BinaryMask, Error, RgbImage};

use crate::error::CliResult;
use crate::manifest::Recorder;

pub const OVERLAY_COLOR: [u8; 3] = [255, 0, 0];
pub const OVERLAY_ALPHA: f32 = 0.5;

/// Blends `OVERLAY_COLOR` over masked pixels; unmasked pixels are copied.
pub fn overlay(mask: &BinaryMask, rgb: &RgbImage) -> mpnet_core::Result<RgbImage> {
    if mask.dims() != rgb.dims() {
        return Err(Error::Shape {
            op: "overlay",
            left: format!("{:?}", mask.dims()),
            right: format!("{:?}", rgb.dims()),
        });
    }
    let (h, w) = rgb.dims();
    let mut out = rgb.clone();
    for y in 0..h {
        for x in 0..w {
            if mask.get(y, x) {
                let px = rgb.get(y, x);
                let mut o = [0u8; 3];
                for c in 0..3 {
                    let v = (1.0 - OVERLAY_ALPHA) * px[c] as f32 + OVERLAY_ALPHA * OVERLAY_COLOR[c] as f32;
                    o[c] = v.round().clamp(0.0, 255.0) as u8;
                }
                out.put(y, x, o);
            }
        }
    }
    Ok(out)
}

pub fn overlay_files(mask: &Path, rgb: &Path, out: &Path, rec: &mut Recorder) -> CliResult<()> {
    let m = load(mask, read_pgm_mask)?;
    let img = load(rgb, read_ppm)?;
    write_file(out, &write_ppm(&overlay(&m, &img)?))?;
    rec.output(out);
    Ok(())
}
