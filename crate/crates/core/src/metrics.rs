//! Region (IoU) and contour (boundary F) scores with per-sequence summaries.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::BinaryMask;

fn same_size(op: &'static str, a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(op, a.dims(), b.dims()));
    }
    Ok(())
}

/// Intersection over union; two empty masks score 1.
pub fn iou(a: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    same_size("iou", a, gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.as_slice().iter().zip(gt.as_slice()) {
        inter += usize::from(x & y);
        union += usize::from(x | y);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Foreground pixels with at least one 4-neighbour inside the image that is
/// background.
pub fn boundary_pixels(m: &BinaryMask) -> BinaryMask {
    let (h, w) = m.dims();
    BinaryMask::from_fn(h, w, |y, x| {
        m.get(y, x)
            && ((y > 0 && !m.get(y - 1, x))
                || (y + 1 < h && !m.get(y + 1, x))
                || (x > 0 && !m.get(y, x - 1))
                || (x + 1 < w && !m.get(y, x + 1)))
    })
    .expect("nonzero size")
}

/// `ceil(0.0075 * diagonal)`, at least 1.
pub fn default_radius(h: usize, w: usize) -> f64 {
    (0.0075 * ((h * h + w * w) as f64).sqrt()).ceil().max(1.0)
}

/// Squared Euclidean distance to the nearest set pixel, `inf` when none.
pub fn squared_distance_transform(m: &BinaryMask) -> Vec<f64> {
    let (h, w) = m.dims();
    let mut d: Vec<f64> = m.as_slice().iter().map(|&v| if v != 0 { 0.0 } else { f64::INFINITY }).collect();
    let mut buf = vec![0.0; h.max(w)];
    let mut out = vec![0.0; h.max(w)];
    for x in 0..w {
        for y in 0..h {
            buf[y] = d[y * w + x];
        }
        edt_1d(&buf[..h], &mut out[..h]);
        for y in 0..h {
            d[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        buf[..w].copy_from_slice(&d[y * w..(y + 1) * w]);
        edt_1d(&buf[..w], &mut out[..w]);
        d[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    d
}

/// Lower envelope of parabolas; exact for integer inputs.
fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let first = f.iter().position(|x| x.is_finite());
    let Some(first) = first else {
        d.iter_mut().for_each(|x| *x = f64::INFINITY);
        return;
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            // z[0] is -inf, so this stops at k = 0
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

/// Precision, recall and F of boundary agreement within `radius` pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryScore {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

fn combine(matched_a: usize, na: usize, matched_gt: usize, ngt: usize) -> BoundaryScore {
    let (precision, recall) = match (na, ngt) {
        (0, 0) => (1.0, 1.0),
        (0, _) => (1.0, 0.0),
        (_, 0) => (0.0, 1.0),
        _ => (matched_a as f64 / na as f64, matched_gt as f64 / ngt as f64),
    };
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    BoundaryScore { precision, recall, f }
}

pub fn boundary_score(a: &BinaryMask, gt: &BinaryMask, radius: f64) -> Result<BoundaryScore> {
    same_size("boundary_f", a, gt)?;
    if !(radius >= 0.0) {
        return Err(Error::invalid(format!("boundary radius must be nonnegative, got {radius}")));
    }
    let ba = boundary_pixels(a);
    let bg = boundary_pixels(gt);
    let da = squared_distance_transform(&ba);
    let dg = squared_distance_transform(&bg);
    let r2 = radius * radius;
    let count = |b: &BinaryMask, dt: &[f64]| {
        b.as_slice().iter().zip(dt).filter(|(&v, &d)| v != 0 && d <= r2).count()
    };
    Ok(combine(count(&ba, &dg), ba.count(), count(&bg, &da), bg.count()))
}

/// Contour accuracy F.
pub fn boundary_f(a: &BinaryMask, gt: &BinaryMask, radius: f64) -> Result<f64> {
    Ok(boundary_score(a, gt, radius)?.f)
}

/// Pairwise-distance reference for [`boundary_score`]; `O(B^2)`.
pub fn boundary_score_brute_force(a: &BinaryMask, gt: &BinaryMask, radius: f64) -> Result<BoundaryScore> {
    same_size("boundary_f", a, gt)?;
    let pts = |m: &BinaryMask| {
        let b = boundary_pixels(m);
        let (h, w) = b.dims();
        let mut v = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if b.get(y, x) {
                    v.push((y as f64, x as f64));
                }
            }
        }
        v
    };
    let (pa, pg) = (pts(a), pts(gt));
    let matched = |from: &[(f64, f64)], to: &[(f64, f64)]| {
        from.iter()
            .filter(|p| to.iter().any(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt() <= radius))
            .count()
    };
    Ok(combine(matched(&pa, &pg), pa.len(), matched(&pg, &pa), pg.len()))
}

/// Mean, recall and decay of one per-frame score series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesStats {
    pub mean: f64,
    /// Fraction of frames scoring above [`RECALL_THRESHOLD`].
    pub recall: f64,
    /// Mean of the first quarter of frames minus mean of the last quarter.
    pub decay: f64,
}

pub const RECALL_THRESHOLD: f64 = 0.5;

/// Quarters hold `ceil(n / 4)` frames.
pub fn sequence_stats(per_frame: &[f64]) -> Result<SeriesStats> {
    sequence_stats_with(per_frame, RECALL_THRESHOLD)
}

pub fn sequence_stats_with(per_frame: &[f64], recall_threshold: f64) -> Result<SeriesStats> {
    let n = per_frame.len();
    if n == 0 {
        return Err(Error::invalid("sequence_stats needs at least one frame"));
    }
    let mean_of = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let q = n.div_ceil(4);
    Ok(SeriesStats {
        mean: mean_of(per_frame),
        recall: per_frame.iter().filter(|&&v| v > recall_threshold).count() as f64 / n as f64,
        decay: mean_of(&per_frame[..q]) - mean_of(&per_frame[n - q..]),
    })
}

/// Per-frame J and F of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceScores {
    pub name: String,
    pub j: Vec<f64>,
    pub f: Vec<f64>,
}

impl SequenceScores {
    pub fn new(name: impl Into<String>) -> Self {
        SequenceScores {
            name: name.into(),
            j: Vec::new(),
            f: Vec::new(),
        }
    }

    /// Scores one frame with the default boundary radius.
    pub fn push(&mut self, pred: &BinaryMask, gt: &BinaryMask) -> Result<()> {
        let (h, w) = gt.dims();
        let j = iou(pred, gt)?;
        let f = boundary_f(pred, gt, default_radius(h, w))?;
        self.j.push(j);
        self.f.push(f);
        Ok(())
    }

    pub fn j_stats(&self) -> Result<SeriesStats> {
        sequence_stats(&self.j)
    }

    pub fn f_stats(&self) -> Result<SeriesStats> {
        sequence_stats(&self.f)
    }
}

/// `sequence,frame,J,F` rows.
pub fn frame_scores_csv(seqs: &[SequenceScores]) -> String {
    let mut out = String::from("sequence,frame,J,F\n");
    for s in seqs {
        for (i, (j, f)) in s.j.iter().zip(&s.f).enumerate() {
            let _ = writeln!(out, "{},{},{:.6},{:.6}", s.name, i, j, f);
        }
    }
    out
}

/// One row per sequence plus an `all` row averaging over every frame.
pub fn aggregate_csv(seqs: &[SequenceScores]) -> Result<String> {
    let mut out = String::from("sequence,frames,J_mean,J_recall,J_decay,F_mean,F_recall,F_decay\n");
    let mut all = SequenceScores::new("all");
    for s in seqs {
        all.j.extend(&s.j);
        all.f.extend(&s.f);
    }
    for s in seqs.iter().chain(std::iter::once(&all)) {
        if s.j.is_empty() {
            continue;
        }
        let (j, f) = (s.j_stats()?, s.f_stats()?);
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.name,
            s.j.len(),
            j.mean,
            j.recall,
            j.decay,
            f.mean,
            f.recall,
            f.decay
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        BinaryMask::from_fn(h, w, |y, x| rows[y].as_bytes()[x] == b'#').unwrap()
    }

    fn brute_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
        let (h, w) = a.dims();
        let (mut i, mut u) = (0, 0);
        for y in 0..h {
            for x in 0..w {
                if a.get(y, x) && b.get(y, x) {
                    i += 1;
                }
                if a.get(y, x) || b.get(y, x) {
                    u += 1;
                }
            }
        }
        if u == 0 {
            1.0
        } else {
            i as f64 / u as f64
        }
    }

    #[test]
    fn iou_examples() {
        let a = mask(&["##.."]);
        let gt = mask(&["###."]);
        assert_eq!(iou(&a, &gt).unwrap(), 2.0 / 3.0);
        assert_eq!(iou(&gt, &gt).unwrap(), 1.0);
        assert_eq!(iou(&mask(&["#..."]), &mask(&["..#."])).unwrap(), 0.0);
        assert_eq!(iou(&mask(&["...."]), &mask(&["...."])).unwrap(), 1.0);
        assert!(iou(&a, &mask(&["##", ".."])).is_err());
    }

    #[test]
    fn boundary_examples() {
        let a = mask(&["......", ".###..", ".###..", ".###..", "......"]);
        assert_eq!(boundary_f(&a, &a, 1.0).unwrap(), 1.0);
        let shifted = mask(&["......", "..###.", "..###.", "..###.", "......"]);
        assert_eq!(boundary_f(&a, &shifted, 2.0).unwrap(), 1.0);
        assert!(boundary_f(&a, &shifted, 0.0).unwrap() < 1.0);
        let empty = mask(&["......"; 5]);
        assert_eq!(boundary_f(&empty, &empty, 1.0).unwrap(), 1.0);
        assert_eq!(boundary_f(&a, &empty, 1.0).unwrap(), 0.0);
        // a full mask has no transitions
        let full = mask(&["######"; 5]);
        assert_eq!(boundary_pixels(&full).count(), 0);
        assert_eq!(default_radius(480, 854), 8.0);
    }

    #[test]
    fn distance_transform_matches_scan() {
        let m = mask(&["#.....", "......", "....#.", "......"]);
        let d = squared_distance_transform(&m);
        for y in 0..4 {
            for x in 0..6 {
                let e = [(0.0, 0.0), (2.0, 4.0)]
                    .iter()
                    .map(|&(py, px): &(f64, f64)| (y as f64 - py).powi(2) + (x as f64 - px).powi(2))
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(d[y * 6 + x], e);
            }
        }
        assert!(squared_distance_transform(&mask(&["..", ".."])).iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn sequence_stats_examples() {
        let s = sequence_stats(&[0.7; 8]).unwrap();
        assert!((s.mean - 0.7).abs() < 1e-12);
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.decay, 0.0);
        assert_eq!(sequence_stats(&[1.0, 1.0, 0.0, 0.0]).unwrap().recall, 0.5);
        let lin: Vec<f64> = (0..12).map(|i| 1.0 - i as f64 / 11.0).collect();
        let s = sequence_stats(&lin).unwrap();
        let first = (lin[0] + lin[1] + lin[2]) / 3.0;
        let last = (lin[9] + lin[10] + lin[11]) / 3.0;
        assert!((s.decay - (first - last)).abs() < 1e-12);
        assert!(sequence_stats(&[]).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut s = SequenceScores::new("seq");
        let a = mask(&["##..", "##.."]);
        s.push(&a, &a).unwrap();
        s.push(&a, &mask(&["....", "...."])).unwrap();
        let rows = frame_scores_csv(&[s.clone()]);
        assert_eq!(rows.lines().next().unwrap(), "sequence,frame,J,F");
        assert_eq!(rows.lines().nth(1).unwrap(), "seq,0,1.000000,1.000000");
        let agg = aggregate_csv(&[s]).unwrap();
        assert_eq!(agg.lines().count(), 3);
        assert!(agg.lines().nth(2).unwrap().starts_with("all,2,0.500000,0.500000"));
    }

    fn arb_mask(h: usize, w: usize) -> impl Strategy<Value = BinaryMask> {
        prop::collection::vec(0u8..2, h * w).prop_map(move |v| BinaryMask::from_vec(h, w, v).unwrap())
    }

    fn rot90(m: &BinaryMask) -> BinaryMask {
        let (h, w) = m.dims();
        BinaryMask::from_fn(w, h, |y, x| m.get(h - 1 - x, y)).unwrap()
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_matches_counting(a in arb_mask(6, 7), b in arb_mask(6, 7)) {
            prop_assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
            prop_assert_eq!(iou(&a, &b).unwrap(), brute_iou(&a, &b));
            if !a.is_empty() {
                prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
            }
        }

        #[test]
        fn nested_masks_improve_iou(gt in arb_mask(6, 6), k1 in arb_mask(6, 6), k2 in arb_mask(6, 6)) {
            let b = gt.intersect(&k1).unwrap();
            let a = b.intersect(&k2).unwrap();
            prop_assert!(iou(&b, &gt).unwrap() >= iou(&a, &gt).unwrap());
        }

        #[test]
        fn boundary_f_is_rotation_invariant(a in arb_mask(7, 5), b in arb_mask(7, 5), r in 0.0f64..3.0) {
            let f = boundary_f(&a, &b, r).unwrap();
            prop_assert_eq!(f, boundary_f(&rot90(&a), &rot90(&b), r).unwrap());
            prop_assert_eq!(
                boundary_score(&a, &b, r).unwrap(),
                boundary_score_brute_force(&a, &b, r).unwrap()
            );
            prop_assert!((0.0..=1.0).contains(&f));
        }

        #[test]
        fn constant_sequences_do_not_decay(v in 0.0f64..1.0, n in 1usize..40) {
            prop_assert_eq!(sequence_stats(&vec![v; n]).unwrap().decay, 0.0);
        }
    }
}
