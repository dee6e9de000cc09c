//! Gaussian filtering on the permutohedral lattice (splat, blur, slice).

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Default)]
struct KeyHasher(u64);

impl Hasher for KeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.write_u64(u64::from(b));
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = (self.0.rotate_left(5) ^ v).wrapping_mul(0x51_7c_c1_b7_27_22_0a_95);
    }

    fn write_i64(&mut self, v: i64) {
        self.write_u64(v as u64);
    }

    fn write_usize(&mut self, v: usize) {
        self.write_u64(v as u64);
    }
}

type KeyMap<V> = HashMap<Vec<i64>, V, BuildHasherDefault<KeyHasher>>;

/// Lattice built for one set of feature vectors; reusable across value
/// channels and mean-field iterations.
pub struct PermutohedralLattice {
    d: usize,
    n: usize,
    /// Enclosing-simplex vertex of each pixel, `n * (d + 1)`.
    offsets: Vec<usize>,
    bary: Vec<f64>,
    /// Blur operator between occupied vertices, CSR.
    row_start: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    vertices: usize,
    scale: f64,
    /// Lattice response of each pixel onto itself, removed by [`Self::filter`].
    self_weight: Vec<f64>,
}

impl PermutohedralLattice {
    /// `features` holds `n` rows of `d` values, already divided by their bandwidths.
    pub fn new<T: Scalar>(features: &[T], d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("permutohedral lattice needs feature dimension >= 1"));
        }
        if features.len() % d != 0 {
            return Err(Error::shape("permutohedral features", d, features.len()));
        }
        let n = features.len() / d;
        let d1 = d + 1;
        let inv_std = (2.0f64 / 3.0).sqrt() * d1 as f64;
        let scale_factor: Vec<f64> =
            (0..d).map(|i| inv_std / (((i + 1) * (i + 2)) as f64).sqrt()).collect();
        let mut canonical = vec![0i64; d1 * d1];
        for i in 0..=d {
            for j in 0..=d - i {
                canonical[i * d1 + j] = i as i64;
            }
            for j in d - i + 1..=d {
                canonical[i * d1 + j] = i as i64 - d1 as i64;
            }
        }

        let mut table: KeyMap<usize> = KeyMap::with_capacity_and_hasher(n * d1, Default::default());
        let mut keys: Vec<Vec<i64>> = Vec::new();
        let mut offsets = vec![0usize; n * d1];
        let mut bary_all = vec![0f64; n * d1];
        let mut elevated = vec![0f64; d1];
        let mut rem0 = vec![0i64; d1];
        let mut rank = vec![0i64; d1];
        let mut bary = vec![0f64; d1 + 1];
        for k in 0..n {
            let f = &features[k * d..(k + 1) * d];
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("lattice feature of pixel {k}")));
            }
            let mut sm = 0.0;
            for i in (1..=d).rev() {
                let cf = f[i - 1].to_f64().unwrap() * scale_factor[i - 1];
                elevated[i] = sm - i as f64 * cf;
                sm += cf;
            }
            elevated[0] = sm;

            let mut sum = 0i64;
            for i in 0..=d {
                let v = elevated[i] / d1 as f64;
                let up = v.ceil() * d1 as f64;
                let down = v.floor() * d1 as f64;
                rem0[i] = if up - elevated[i] < elevated[i] - down { up as i64 } else { down as i64 };
                sum += rem0[i];
            }
            sum /= d1 as i64;
            rank.iter_mut().for_each(|r| *r = 0);
            for i in 0..d {
                let di = elevated[i] - rem0[i] as f64;
                for j in i + 1..=d {
                    if di < elevated[j] - rem0[j] as f64 {
                        rank[i] += 1;
                    } else {
                        rank[j] += 1;
                    }
                }
            }
            for i in 0..=d {
                rank[i] += sum;
                if rank[i] < 0 {
                    rank[i] += d1 as i64;
                    rem0[i] += d1 as i64;
                } else if rank[i] > d as i64 {
                    rank[i] -= d1 as i64;
                    rem0[i] -= d1 as i64;
                }
            }
            bary.iter_mut().for_each(|b| *b = 0.0);
            for i in 0..=d {
                let v = (elevated[i] - rem0[i] as f64) / d1 as f64;
                let r = rank[i] as usize;
                bary[d - r] += v;
                bary[d - r + 1] -= v;
            }
            bary[0] += 1.0 + bary[d1];

            for remainder in 0..=d {
                let key: Vec<i64> =
                    (0..d).map(|i| rem0[i] + canonical[remainder * d1 + rank[i] as usize]).collect();
                let next = keys.len();
                let idx = *table.entry(key.clone()).or_insert(next);
                if idx == next {
                    keys.push(key);
                }
                offsets[k * d1 + remainder] = idx;
                bary_all[k * d1 + remainder] = bary[remainder];
            }
        }

        let m = keys.len();
        let stencil = blur_stencil(d);
        let mut stencil_list: Vec<(&Vec<i64>, f64)> = stencil.iter().map(|(k, &w)| (k, w)).collect();
        stencil_list.sort_by(|a, b| a.0.cmp(b.0));
        let mut row_start = Vec::with_capacity(m + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        let mut probe = vec![0i64; d];
        row_start.push(0);
        for key in &keys {
            for &(delta, w) in &stencil_list {
                for c in 0..d {
                    probe[c] = key[c] + delta[c];
                }
                if let Some(&j) = table.get(&probe) {
                    cols.push(j);
                    weights.push(w);
                }
            }
            row_start.push(cols.len());
        }

        // Normalise so the kernel integrates like exp(-|x|^2 / 2).
        let cell = (d1 as f64).sqrt() * (d1 as f64).powi(d as i32 - 1) / inv_std.powi(d as i32);
        let scale = (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0) / (cell * 2f64.powi(d1 as i32));

        let mut lat = PermutohedralLattice {
            d,
            n,
            offsets,
            bary: bary_all,
            row_start,
            cols,
            weights,
            vertices: m,
            scale,
            self_weight: Vec::new(),
        };
        lat.self_weight = lat.self_responses(&keys, &stencil);
        Ok(lat)
    }

    pub fn pixels(&self) -> usize {
        self.n
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    fn blur(&self, vd: usize, src: &[f64], dst: &mut [f64]) {
        for i in 0..self.vertices {
            let out = &mut dst[i * vd..(i + 1) * vd];
            out.iter_mut().for_each(|v| *v = 0.0);
            for e in self.row_start[i]..self.row_start[i + 1] {
                let (j, w) = (self.cols[e], self.weights[e]);
                for c in 0..vd {
                    out[c] += w * src[j * vd + c];
                }
            }
        }
    }

    /// `sum_{r,r'} b_r b_r' B(v_r, v_r')` per pixel.
    fn self_responses(&self, keys: &[Vec<i64>], stencil: &KeyMap<f64>) -> Vec<f64> {
        let d1 = self.d + 1;
        let mut delta = vec![0i64; self.d];
        (0..self.n)
            .map(|k| {
                let verts = &self.offsets[k * d1..(k + 1) * d1];
                let bary = &self.bary[k * d1..(k + 1) * d1];
                let mut acc = 0.0;
                for r in 0..d1 {
                    for s in 0..d1 {
                        for (c, dc) in delta.iter_mut().enumerate() {
                            *dc = keys[verts[s]][c] - keys[verts[r]][c];
                        }
                        acc += bary[r] * bary[s] * stencil.get(&delta).copied().unwrap_or(0.0);
                    }
                }
                acc * self.scale
            })
            .collect()
    }

    /// Lattice self-response of each pixel (the approximation of `exp(0) = 1`).
    pub fn self_weights(&self) -> &[f64] {
        &self.self_weight
    }

    /// Approximates `out_i = sum_{j != i} exp(-|f_i - f_j|^2 / 2) v_j` for
    /// `vd` interleaved value channels.
    pub fn filter<T: Scalar>(&self, values: &[T], vd: usize) -> Result<Vec<T>> {
        if values.len() != self.n * vd {
            return Err(Error::shape("permutohedral filter values", (self.n, vd), values.len()));
        }
        let d1 = self.d + 1;
        let m = self.vertices;
        let mut a = vec![0f64; m * vd];
        for k in 0..self.n {
            for r in 0..d1 {
                let o = self.offsets[k * d1 + r];
                let w = self.bary[k * d1 + r];
                for c in 0..vd {
                    a[o * vd + c] += w * values[k * vd + c].to_f64().unwrap();
                }
            }
        }
        let mut b = vec![0f64; m * vd];
        self.blur(vd, &a, &mut b);
        let a = b;
        let mut out = Vec::with_capacity(self.n * vd);
        for k in 0..self.n {
            for c in 0..vd {
                let mut v = 0.0;
                for r in 0..d1 {
                    v += self.bary[k * d1 + r] * a[self.offsets[k * d1 + r] * vd + c];
                }
                let own = values[k * vd + c].to_f64().unwrap();
                out.push(T::of(self.scale * v - self.self_weight[k] * own));
            }
        }
        Ok(out)
    }
}

/// Composition of the `[1/2, 1, 1/2]` blurs along all `d + 1` lattice
/// directions, as key offsets (first `d` coordinates) with weights.
fn blur_stencil(d: usize) -> KeyMap<f64> {
    let d1 = d + 1;
    let mut acc: KeyMap<f64> = KeyMap::default();
    let mut c = vec![-1i64; d1];
    loop {
        let total: i64 = c.iter().sum();
        let delta: Vec<i64> = (0..d).map(|i| total - d1 as i64 * c[i]).collect();
        let w: f64 = c.iter().map(|&v| if v == 0 { 1.0 } else { 0.5 }).product();
        *acc.entry(delta).or_insert(0.0) += w;
        let mut i = 0;
        while i < d1 && c[i] == 1 {
            c[i] = -1;
            i += 1;
        }
        if i == d1 {
            break;
        }
        c[i] += 1;
    }
    acc
}

/// One-shot lattice filter; see [`PermutohedralLattice::filter`].
pub fn permutohedral_filter<T: Scalar>(values: &[T], vd: usize, features: &[T], d: usize) -> Result<Vec<T>> {
    PermutohedralLattice::new(features, d)?.filter(values, vd)
}
