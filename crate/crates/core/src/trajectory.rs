//! Per-frame positional descriptors of an object's bounding box.
//!
//! Each frame yields `(x_min, y_min, x_max, y_max, x_c, y_c, w, h)` as
//! fractions of the image size. The upper edges are exclusive
//! (`x_max = (col_max + 1) / W`), so a full-width object has `w = 1`.
//! Frames without foreground produce the zero vector and `valid = false`.

use serde::Serialize;

use crate::mask::Bbox;
use crate::sequence::MaskSequence;

pub const FEATURE_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TrajectoryFeature {
    pub values: [f64; FEATURE_DIM],
    pub valid: bool,
}

impl TrajectoryFeature {
    pub fn invalid() -> Self {
        Self::default()
    }

    pub fn from_bbox(bbox: &Bbox, height: usize, width: usize) -> Self {
        let (w, h) = (width as f64, height as f64);
        let x_min = bbox.x_min as f64 / w;
        let y_min = bbox.y_min as f64 / h;
        let x_max = (bbox.x_max + 1) as f64 / w;
        let y_max = (bbox.y_max + 1) as f64 / h;
        Self {
            values: [
                x_min,
                y_min,
                x_max,
                y_max,
                (x_min + x_max) / 2.0,
                (y_min + y_max) / 2.0,
                x_max - x_min,
                y_max - y_min,
            ],
            valid: true,
        }
    }
}

/// Features for frames `0..num_frames`. Frames past the sequence's last
/// stored index are empty, so `num_frames` may exceed the stored span.
pub fn positional_features(seq: &MaskSequence, num_frames: usize) -> Vec<TrajectoryFeature> {
    (0..num_frames)
        .map(|t| match seq.get(t).and_then(|m| m.bbox()) {
            Some(b) => TrajectoryFeature::from_bbox(&b, seq.height(), seq.width()),
            None => TrajectoryFeature::invalid(),
        })
        .collect()
}
