//! Bit-exact readers and writers for the on-disk formats:
//! Middlebury `.flo` flow, binary PGM masks, binary PPM frames and
//! little-endian single-channel PFM maps.

use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::{BinaryMask, RgbImage, ScalarMap};

pub const FLO_MAGIC: f32 = 202021.25;

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads and parses `path`; parse errors are prefixed with the path.
pub fn load<T>(path: &Path, parse: impl FnOnce(&[u8]) -> Result<T>) -> Result<T> {
    let bytes = read_file(path)?;
    parse(&bytes).map_err(|e| match e {
        Error::Format { format, reason } => Error::Format {
            format,
            reason: format!("{}: {reason}", path.display()),
        },
        e => Error::format("file", format!("{}: {e}", path.display())),
    })
}

fn le_u32(bytes: &[u8], at: usize) -> Option<[u8; 4]> {
    bytes.get(at..at + 4).map(|s| [s[0], s[1], s[2], s[3]])
}

pub fn read_flo(bytes: &[u8]) -> Result<FlowField> {
    let magic = le_u32(bytes, 0).map(f32::from_le_bytes);
    if magic != Some(FLO_MAGIC) {
        return Err(Error::format("flo", "bad magic"));
    }
    let (w, h) = match (le_u32(bytes, 4), le_u32(bytes, 8)) {
        (Some(w), Some(h)) => (i32::from_le_bytes(w), i32::from_le_bytes(h)),
        _ => return Err(Error::format("flo", "unexpected end in header")),
    };
    if w <= 0 || h <= 0 {
        return Err(Error::format("flo", format!("nonpositive dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let need = 12 + w * h * 8;
    if bytes.len() < need {
        return Err(Error::format(
            "flo",
            format!("truncated payload: expected {need} bytes, got {}", bytes.len()),
        ));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for px in bytes[12..need].chunks_exact(8) {
        u.push(f32::from_le_bytes([px[0], px[1], px[2], px[3]]));
        v.push(f32::from_le_bytes([px[4], px[5], px[6], px[7]]));
    }
    FlowField::new(h, w, u, v)
}

pub fn write_flo(flow: &FlowField) -> Vec<u8> {
    let (h, w) = flow.dims();
    let mut out = Vec::with_capacity(12 + h * w * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for (u, v) in flow.u().iter().zip(flow.v()) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Whitespace/comment-separated header tokens of a netpbm-style file.
/// Returns the tokens and the offset just past the single whitespace byte
/// that terminates the last one.
fn header_tokens(bytes: &[u8], count: usize, format: &'static str) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::format(format, "unexpected end in header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err(Error::format(format, "unexpected end after header"));
    }
    Ok((tokens, i + 1))
}

fn parse_dim(tok: &str, format: &'static str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::format(format, format!("invalid dimension `{tok}`"))),
    }
}

fn netpbm(bytes: &[u8], magic: &str, channels: usize, format: &'static str) -> Result<(usize, usize, Vec<u8>)> {
    let (tok, off) = header_tokens(bytes, 4, format)?;
    if tok[0] != magic {
        return Err(Error::format(format, format!("bad magic `{}`", tok[0])));
    }
    let w = parse_dim(&tok[1], format)?;
    let h = parse_dim(&tok[2], format)?;
    match tok[3].parse::<u32>() {
        Ok(v) if (1..=255).contains(&v) => {}
        _ => return Err(Error::format(format, format!("unsupported maxval `{}`", tok[3]))),
    }
    let need = w * h * channels;
    let payload = bytes
        .get(off..off + need)
        .ok_or_else(|| Error::format(format, format!("unexpected end: need {need} payload bytes")))?;
    Ok((h, w, payload.to_vec()))
}

/// 8-bit P5 mask: 0 static, 255 moving.
pub fn write_pgm_mask(mask: &BinaryMask) -> Vec<u8> {
    let (h, w) = mask.dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(mask.as_slice().iter().map(|&v| if v != 0 { 255u8 } else { 0 }));
    out
}

/// Gray levels above 127 read as set.
pub fn read_pgm_mask(bytes: &[u8]) -> Result<BinaryMask> {
    let (h, w, data) = netpbm(bytes, "P5", 1, "pgm")?;
    BinaryMask::from_vec(h, w, data.into_iter().map(|v| u8::from(v > 127)).collect())
}

pub fn write_ppm(img: &RgbImage) -> Vec<u8> {
    let (h, w) = img.dims();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(img.as_bytes());
    out
}

pub fn read_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let (h, w, data) = netpbm(bytes, "P6", 3, "ppm")?;
    RgbImage::from_vec(h, w, data)
}

/// Single-channel PFM, little-endian (negative scale), bottom-up rows.
pub fn write_pfm(map: &ScalarMap) -> Vec<u8> {
    let (h, w) = map.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&map.get(y, x).to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(bytes: &[u8]) -> Result<ScalarMap> {
    let (tok, off) = header_tokens(bytes, 4, "pfm")?;
    if tok[0] != "Pf" {
        return Err(Error::format("pfm", format!("bad magic `{}` (only single-channel Pf)", tok[0])));
    }
    let w = parse_dim(&tok[1], "pfm")?;
    let h = parse_dim(&tok[2], "pfm")?;
    let scale: f32 = tok[3]
        .parse()
        .map_err(|_| Error::format("pfm", format!("invalid scale `{}`", tok[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format("pfm", "scale must be nonzero"));
    }
    let little = scale < 0.0;
    let need = w * h * 4;
    let payload = bytes
        .get(off..off + need)
        .ok_or_else(|| Error::format("pfm", format!("unexpected end: need {need} payload bytes")))?;
    let mut data = vec![0.0f32; w * h];
    for (i, c) in payload.chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, x) = (i / w, i % w);
        data[(h - 1 - row) * w + x] = v;
    }
    ScalarMap::from_vec(h, w, data)
}
