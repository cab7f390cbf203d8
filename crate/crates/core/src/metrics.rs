//! Region similarity (J), contour accuracy (F) and their mean.
//!
//! F follows the DAVIS boundary convention: boundaries are matched within a
//! tolerance of `ceil(0.008 * diagonal)` pixels. The tolerance region is a
//! square (Chebyshev ball).

use serde::Serialize;
use thiserror::Error;

use crate::mask::{boundary_map, mask_iou, rle_decode, BinaryMask, MaskError};
use crate::sequence::MaskSequence;

/// Boundary tolerance as a fraction of the image diagonal.
pub const BOUND_FRACTION: f64 = 0.008;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("ground truth {0:?} has no frames")]
    NoFrames(String),
    #[error("no objects to report")]
    Empty,
}

pub fn bound_radius(height: usize, width: usize) -> usize {
    let diag = ((height * height + width * width) as f64).sqrt();
    (BOUND_FRACTION * diag).ceil() as usize
}

fn eval_frames(gt: &MaskSequence) -> Result<Vec<usize>, MetricsError> {
    let frames: Vec<usize> = gt.frame_indices().collect();
    if frames.is_empty() {
        return Err(MetricsError::NoFrames(gt.object_id().to_string()));
    }
    Ok(frames)
}

/// Mean IoU over the frames stored in `gt`.
pub fn region_similarity(pred: &MaskSequence, gt: &MaskSequence) -> Result<f64, MetricsError> {
    pred.check_same_dims(gt)?;
    let frames = eval_frames(gt)?;
    let mut sum = 0.0;
    for &t in &frames {
        sum += mask_iou(&pred.mask_at(t), &gt.mask_at(t))?;
    }
    Ok(sum / frames.len() as f64)
}

/// Square dilation of radius `r`, as two separable sliding-window passes.
pub fn dilate(mask: &BinaryMask, r: usize) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    let window = |line: &[bool]| -> Vec<bool> {
        let n = line.len();
        let mut prefix = vec![0u32; n + 1];
        for (i, &v) in line.iter().enumerate() {
            prefix[i + 1] = prefix[i] + u32::from(v);
        }
        (0..n)
            .map(|i| prefix[(i + r + 1).min(n)] > prefix[i.saturating_sub(r)])
            .collect()
    };
    let mut rows = vec![false; h * w];
    for row in 0..h {
        let out = window(&mask.data()[row * w..(row + 1) * w]);
        rows[row * w..(row + 1) * w].copy_from_slice(&out);
    }
    let mut data = vec![false; h * w];
    let mut column = vec![false; h];
    for col in 0..w {
        for row in 0..h {
            column[row] = rows[row * w + col];
        }
        for (row, v) in window(&column).into_iter().enumerate() {
            data[row * w + col] = v;
        }
    }
    BinaryMask::from_vec(h, w, data).expect("same dimensions")
}

fn overlap(a: &BinaryMask, b: &BinaryMask) -> u64 {
    a.data()
        .iter()
        .zip(b.data())
        .filter(|(x, y)| **x && **y)
        .count() as u64
}

/// Boundary F-measure of a single frame.
pub fn frame_f_measure(pred: &BinaryMask, gt: &BinaryMask, radius: usize) -> f64 {
    let (bp, bg) = (boundary_map(pred), boundary_map(gt));
    let (np, ng) = (bp.count(), bg.count());
    match (np, ng) {
        (0, 0) => return 1.0,
        (0, _) | (_, 0) => return 0.0,
        _ => {}
    }
    let precision = overlap(&bp, &dilate(&bg, radius)) as f64 / np as f64;
    let recall = overlap(&bg, &dilate(&bp, radius)) as f64 / ng as f64;
    if precision + recall == 0.0 {
        return 0.0;
    }
    2.0 * precision * recall / (precision + recall)
}

/// Mean boundary F-measure over the frames stored in `gt`.
pub fn contour_accuracy(pred: &MaskSequence, gt: &MaskSequence) -> Result<f64, MetricsError> {
    pred.check_same_dims(gt)?;
    let frames = eval_frames(gt)?;
    let radius = bound_radius(gt.height(), gt.width());
    let mut sum = 0.0;
    for &t in &frames {
        sum += frame_f_measure(
            &rle_decode(&pred.mask_at(t)),
            &rle_decode(&gt.mask_at(t)),
            radius,
        );
    }
    Ok(sum / frames.len() as f64)
}

/// Rounds to two decimals, ties to even.
pub fn round_half_even_2(x: f64) -> f64 {
    let scaled = x * 100.0;
    let floor = scaled.floor();
    let frac = scaled - floor;
    // decimal ties are rarely exact in binary; treat near-ties as ties
    let rounded = if (frac - 0.5).abs() < 1e-9 {
        if floor % 2.0 == 0.0 {
            floor
        } else {
            floor + 1.0
        }
    } else {
        scaled.round()
    };
    rounded / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectScore {
    pub id: String,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "JF")]
    pub jf: f64,
}

/// Per-object and mean scores in percent. Values are kept at full precision;
/// [`MetricsReport::rounded`] gives the two-decimal display form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub per_object: Vec<ObjectScore>,
    #[serde(rename = "mean_J")]
    pub mean_j: f64,
    #[serde(rename = "mean_F")]
    pub mean_f: f64,
    #[serde(rename = "mean_JF")]
    pub mean_jf: f64,
}

impl MetricsReport {
    pub fn rounded(&self) -> MetricsReport {
        MetricsReport {
            per_object: self
                .per_object
                .iter()
                .map(|o| ObjectScore {
                    id: o.id.clone(),
                    j: round_half_even_2(o.j),
                    f: round_half_even_2(o.f),
                    jf: round_half_even_2(o.jf),
                })
                .collect(),
            mean_j: round_half_even_2(self.mean_j),
            mean_f: round_half_even_2(self.mean_f),
            mean_jf: round_half_even_2(self.mean_jf),
        }
    }
}

/// Builds the report from `(id, J%, F%)` triples; means are unweighted.
pub fn jf_report<S: Into<String>>(
    scores: impl IntoIterator<Item = (S, f64, f64)>,
) -> Result<MetricsReport, MetricsError> {
    let per_object: Vec<ObjectScore> = scores
        .into_iter()
        .map(|(id, j, f)| ObjectScore {
            id: id.into(),
            j,
            f,
            jf: (j + f) / 2.0,
        })
        .collect();
    if per_object.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = per_object.len() as f64;
    let mean = |g: fn(&ObjectScore) -> f64| per_object.iter().map(g).sum::<f64>() / n;
    Ok(MetricsReport {
        mean_j: mean(|o| o.j),
        mean_f: mean(|o| o.f),
        mean_jf: mean(|o| o.jf),
        per_object,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{rle_encode, RleMask};

    fn rect(
        h: usize,
        w: usize,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> BinaryMask {
        BinaryMask::from_fn(h, w, |r, c| rows.contains(&r) && cols.contains(&c)).unwrap()
    }

    fn seq(masks: Vec<BinaryMask>) -> MaskSequence {
        let (h, w) = (masks[0].height(), masks[0].width());
        MaskSequence::from_frames(
            "o",
            h,
            w,
            masks.iter().enumerate().map(|(t, m)| (t, rle_encode(m))),
        )
        .unwrap()
    }

    #[test]
    fn radius() {
        assert_eq!(bound_radius(100, 100), 2);
        assert_eq!(bound_radius(480, 854), 8);
    }

    #[test]
    fn j_examples() {
        let gt = seq(vec![rect(4, 4, 0..2, 0..2), rect(4, 4, 0..2, 0..4)]);
        assert_eq!(region_similarity(&gt, &gt).unwrap(), 1.0);
        // frame 0: 2/4 = 0.5; frame 1: 7 of gt's 8 px plus 2 outside, 7/10 = 0.7
        let pred = seq(vec![
            rect(4, 4, 0..1, 0..2),
            BinaryMask::from_fn(4, 4, |r, c| {
                r < 2 && c < 4 && !(r == 1 && c == 3) || (r == 2 && c < 2)
            })
            .unwrap(),
        ]);
        let j = region_similarity(&pred, &gt).unwrap();
        assert!((j - 0.6).abs() < 1e-12, "{j}");
        let empty = MaskSequence::from_frames(
            "e",
            4,
            4,
            [
                (0, RleMask::empty(4, 4).unwrap()),
                (1, RleMask::empty(4, 4).unwrap()),
            ],
        )
        .unwrap();
        assert_eq!(region_similarity(&empty, &gt).unwrap(), 0.0);
        assert_eq!(region_similarity(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn f_examples() {
        let gt = seq(vec![rect(100, 100, 20..60, 20..60)]);
        assert_eq!(contour_accuracy(&gt, &gt).unwrap(), 1.0);
        let shifted = seq(vec![rect(100, 100, 21..61, 21..61)]);
        assert_eq!(contour_accuracy(&shifted, &gt).unwrap(), 1.0);
        let far = seq(vec![rect(100, 100, 80..90, 80..90)]);
        assert_eq!(contour_accuracy(&far, &gt).unwrap(), 0.0);
        let empty =
            MaskSequence::from_frames("e", 100, 100, [(0, RleMask::empty(100, 100).unwrap())])
                .unwrap();
        assert_eq!(contour_accuracy(&empty, &gt).unwrap(), 0.0);
        assert_eq!(contour_accuracy(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn dilation_matches_naive() {
        let m = BinaryMask::from_fn(9, 7, |r, c| (r * 7 + c) % 11 == 0).unwrap();
        for r in 0..4 {
            let d = dilate(&m, r);
            let naive = BinaryMask::from_fn(9, 7, |row, col| {
                m.foreground()
                    .any(|(y, x)| y.abs_diff(row) <= r && x.abs_diff(col) <= r)
            })
            .unwrap();
            assert_eq!(d, naive);
        }
    }

    #[test]
    fn no_frames_is_error() {
        let gt = MaskSequence::new("g", 2, 2).unwrap();
        assert!(matches!(
            region_similarity(&gt, &gt),
            Err(MetricsError::NoFrames(_))
        ));
    }

    #[test]
    fn jf_values() {
        let r = jf_report([("a", 49.08, 56.26)]).unwrap().rounded();
        assert_eq!(r.mean_jf, 52.67);
        let r = jf_report([("a", 45.34, 53.12)]).unwrap().rounded();
        assert_eq!(r.mean_jf, 49.23);
        let r = jf_report([("a", 37.5, 37.5)]).unwrap();
        assert_eq!(r.mean_jf, 37.5);
        let r = jf_report([("a", 100.0, 100.0), ("b", 0.0, 0.0)])
            .unwrap()
            .rounded();
        assert_eq!(r.mean_jf, 50.0);
        assert!(matches!(
            jf_report(Vec::<(String, f64, f64)>::new()),
            Err(MetricsError::Empty)
        ));
    }

    #[test]
    fn half_even() {
        assert_eq!(round_half_even_2(50.125), 50.12);
        assert_eq!(round_half_even_2(50.135), 50.14);
        assert_eq!(round_half_even_2(52.665), 52.66);
        assert_eq!(round_half_even_2(1.006), 1.01);
        assert_eq!(round_half_even_2(0.0), 0.0);
    }
}
