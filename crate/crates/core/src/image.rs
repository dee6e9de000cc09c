//! Plain raster containers shared across the pipeline.

use crate::error::{Error, Result};

/// Per-pixel `{0, 1}` labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::invalid(format!("mask size must be positive, got {h}x{w}")));
        }
        Ok(BinaryMask {
            h,
            w,
            data: vec![0; h * w],
        })
    }

    /// Any nonzero byte counts as set.
    pub fn from_vec(h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if h == 0 || w == 0 || data.len() != h * w {
            return Err(Error::shape("BinaryMask::from_vec", (h, w), data.len()));
        }
        Ok(BinaryMask {
            h,
            w,
            data: data.into_iter().map(|v| u8::from(v != 0)).collect(),
        })
    }

    pub fn from_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut m = Self::new(h, w)?;
        for y in 0..h {
            for x in 0..w {
                m.data[y * w + x] = u8::from(f(y, x));
            }
        }
        Ok(m)
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.w + x] != 0
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.w + x] = u8::from(v);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip(other, |a, b| a | b)
    }

    pub fn intersect(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip(other, |a, b| a & b)
    }

    pub fn minus(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip(other, |a, b| a & (1 - b))
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    fn zip(&self, other: &BinaryMask, f: impl Fn(u8, u8) -> u8) -> Result<BinaryMask> {
        if self.dims() != other.dims() {
            return Err(Error::shape("mask combine", self.dims(), other.dims()));
        }
        Ok(BinaryMask {
            h: self.h,
            w: self.w,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Column-reversed copy.
    pub fn mirrored(&self) -> BinaryMask {
        let mut m = self.clone();
        for row in m.data.chunks_exact_mut(self.w) {
            row.reverse();
        }
        m
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<BinaryMask> {
        if y0 + h > self.h || x0 + w > self.w {
            return Err(Error::invalid(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds {}x{}",
                self.h, self.w
            )));
        }
        BinaryMask::from_fn(h, w, |y, x| self.get(y0 + y, x0 + x))
    }
}

/// Per-pixel real map, row-major. Used for motion probabilities, fused
/// probabilities, objectness and disparity.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl ScalarMap {
    pub fn filled(h: usize, w: usize, v: f32) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::invalid(format!("map size must be positive, got {h}x{w}")));
        }
        Ok(ScalarMap {
            h,
            w,
            data: vec![v; h * w],
        })
    }

    pub fn from_vec(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if h == 0 || w == 0 || data.len() != h * w {
            return Err(Error::shape("ScalarMap::from_vec", (h, w), data.len()));
        }
        Ok(ScalarMap { h, w, data })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.data[y * self.w + x] = v;
    }

    /// Checks every value lies in `[0, 1]`.
    pub fn check_unit_range(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            None => Ok(()),
            Some(i) => Err(Error::invalid(format!(
                "{what} value {} at pixel {i} is outside [0, 1]",
                self.data[i]
            ))),
        }
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<ScalarMap> {
        if y0 + h > self.h || x0 + w > self.w {
            return Err(Error::invalid("crop exceeds map"));
        }
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            let row = (y0 + y) * self.w + x0;
            data.extend_from_slice(&self.data[row..row + w]);
        }
        ScalarMap::from_vec(h, w, data)
    }
}

/// Motion probability `m` (network output) or fused probability `p`.
pub type MotionProbMap = ScalarMap;
/// Per-pixel fraction of object proposals covering the pixel.
pub type ObjectnessMap = ScalarMap;

/// 8-bit RGB frame, interleaved row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(h: usize, w: usize) -> Result<Self> {
        Self::from_vec(h, w, vec![0; h * w * 3])
    }

    pub fn from_vec(h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if h == 0 || w == 0 || data.len() != h * w * 3 {
            return Err(Error::shape("RgbImage::from_vec", (h, w, 3), data.len()));
        }
        Ok(RgbImage { h, w, data })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.w + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<RgbImage> {
        if y0 + h > self.h || x0 + w > self.w {
            return Err(Error::invalid("crop exceeds image"));
        }
        let mut out = RgbImage::new(h, w)?;
        for y in 0..h {
            for x in 0..w {
                out.put(y, x, self.get(y0 + y, x0 + x));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_set_algebra() {
        let a = BinaryMask::from_vec(1, 4, vec![1, 1, 0, 0]).unwrap();
        let b = BinaryMask::from_vec(1, 4, vec![0, 1, 1, 0]).unwrap();
        assert_eq!(a.union(&b).unwrap().as_slice(), &[1, 1, 1, 0]);
        assert_eq!(a.intersect(&b).unwrap().as_slice(), &[0, 1, 0, 0]);
        assert_eq!(a.minus(&b).unwrap().as_slice(), &[1, 0, 0, 0]);
        assert!(a.intersect(&b).unwrap().is_subset_of(&a));
        assert_eq!(a.mirrored().as_slice(), &[0, 0, 1, 1]);
        assert!(BinaryMask::new(0, 3).is_err());
    }
}
