//! `MPNETW1` weight files: magic, config header, then every tensor in build
//! order as `ndim, dims..., values` with little-endian `u32` and `f32`.

use super::config::MpNetConfig;
use super::network::MpNetModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const WEIGHTS_MAGIC: &[u8; 7] = b"MPNETW1";
const FORMAT: &str = "MPNETW1";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn save_weights<T: Scalar>(model: &MpNetModel<T>) -> Vec<u8> {
    let cfg = model.config();
    let mut out = WEIGHTS_MAGIC.to_vec();
    for v in [
        cfg.input_channels,
        cfg.num_encoder_stages,
        cfg.num_decoder_units,
        cfg.convs_per_stage,
        cfg.kernel_size,
    ] {
        put_u32(&mut out, v);
    }
    for &c in &cfg.channels_per_stage {
        put_u32(&mut out, c);
    }
    for (_, dims, values) in model.state() {
        put_u32(&mut out, dims.len());
        for d in dims {
            put_u32(&mut out, d);
        }
        for v in values {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(FORMAT, format!("unexpected end while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

fn read_header<'a>(bytes: &'a [u8]) -> Result<(MpNetConfig, Reader<'a>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(WEIGHTS_MAGIC.len(), "magic")? != WEIGHTS_MAGIC {
        return Err(Error::format(FORMAT, "bad magic or unsupported version"));
    }
    let input_channels = r.u32("config header")?;
    let num_encoder_stages = r.u32("config header")?;
    let num_decoder_units = r.u32("config header")?;
    let convs_per_stage = r.u32("config header")?;
    let kernel_size = r.u32("config header")?;
    if num_encoder_stages > 32 {
        return Err(Error::format(FORMAT, format!("implausible stage count {num_encoder_stages}")));
    }
    let channels_per_stage = (0..num_encoder_stages)
        .map(|_| r.u32("config header"))
        .collect::<Result<Vec<_>>>()?;
    let cfg = MpNetConfig {
        input_channels,
        num_encoder_stages,
        num_decoder_units,
        channels_per_stage,
        convs_per_stage,
        kernel_size,
    };
    Ok((cfg, r))
}

/// Config stored in a weight file header.
pub fn read_weights_config(bytes: &[u8]) -> Result<MpNetConfig> {
    let (cfg, _) = read_header(bytes)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads weights into a network of layout `cfg`. Every stored tensor shape
/// must match `cfg`; the first mismatch is reported by tensor name.
pub fn load_weights<T: Scalar>(bytes: &[u8], cfg: &MpNetConfig) -> Result<MpNetModel<T>> {
    let (stored, mut r) = read_header(bytes)?;
    let mut model = MpNetModel::<T>::build(cfg, 0)?;
    let mut values = Vec::new();
    for (name, dims, _) in model.state() {
        let ndim = r.u32(&name)?;
        if ndim > 8 {
            return Err(Error::format(FORMAT, format!("tensor {name}: implausible rank {ndim}")));
        }
        let got = (0..ndim).map(|_| r.u32(&name)).collect::<Result<Vec<_>>>()?;
        if got != dims {
            return Err(Error::format(
                FORMAT,
                format!("tensor {name} has shape {got:?} in file, configuration expects {dims:?}"),
            ));
        }
        let n: usize = dims.iter().product();
        let raw = r.take(4 * n, &name)?;
        values.push(
            raw.chunks_exact(4)
                .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
                .collect(),
        );
    }
    if stored != *cfg {
        return Err(Error::format(
            FORMAT,
            format!("file was written for {stored:?}, requested {cfg:?}"),
        ));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(FORMAT, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    model.set_state(values)?;
    Ok(model)
}

/// Loads weights using the layout stored in the file itself.
pub fn load_weights_any<T: Scalar>(bytes: &[u8]) -> Result<MpNetModel<T>> {
    let cfg = read_weights_config(bytes)?;
    load_weights(bytes, &cfg)
}
