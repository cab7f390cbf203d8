//! Two-stage IoU fusion of per-frame referring predictions with candidate
//! instance sequences.
//!
//! 1. Frames of the prediction whose area is zero or small relative to the
//!    median nonzero area are marked invalid.
//! 2. On each valid frame, every candidate whose mask overlaps the
//!    prediction with IoU >= `tau_f` is matched and the matches are unioned.
//!    Invalid frames reuse the matches of the previous valid frame.
//! 3. Candidates whose whole-video IoU with the frame-level result reaches
//!    `tau_v` are selected and unioned into the final sequence.
//!
//! No step is random.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{mask_iou, MaskError, RleMask};
use crate::sequence::MaskSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Noise threshold as a fraction of the median nonzero frame area.
    pub alpha: f64,
    /// Frame-level IoU threshold.
    pub tau_f: f64,
    /// Video-level IoU threshold.
    pub tau_v: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            tau_f: 0.5,
            tau_v: 0.3,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must be in [0, 1), got {}",
                self.alpha
            )));
        }
        for (name, v) in [("tau_f", self.tau_f), ("tau_v", self.tau_v)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFusion {
    pub fused: MaskSequence,
    /// Candidate indices matched on each valid frame (possibly empty).
    pub matches: BTreeMap<usize, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub fused_frames: MaskSequence,
    /// Selected candidate indices, ascending.
    pub selected: Vec<usize>,
    pub per_frame_matches: BTreeMap<usize, Vec<usize>>,
    pub frame_validity: BTreeMap<usize, bool>,
}

/// Frame count covered by a prediction and its candidates.
pub fn frame_span(pred: &MaskSequence, candidates: &[MaskSequence]) -> usize {
    candidates
        .iter()
        .map(MaskSequence::frame_span)
        .fold(pred.frame_span(), usize::max)
}

/// Validity of frames `0..num_frames`: a frame is invalid when its area is
/// zero or below `alpha` times the median nonzero area.
pub fn noise_filter(pred: &MaskSequence, num_frames: usize, alpha: f64) -> BTreeMap<usize, bool> {
    let areas: Vec<u64> = (0..num_frames)
        .map(|t| pred.get(t).map_or(0, RleMask::area))
        .collect();
    let mut nonzero: Vec<u64> = areas.iter().copied().filter(|&a| a > 0).collect();
    nonzero.sort_unstable();
    let median = match nonzero.len() {
        0 => 0.0,
        n if n % 2 == 1 => nonzero[n / 2] as f64,
        n => (nonzero[n / 2 - 1] as f64 + nonzero[n / 2] as f64) / 2.0,
    };
    let threshold = alpha * median;
    areas
        .iter()
        .enumerate()
        .map(|(t, &a)| (t, a > 0 && (a as f64) >= threshold))
        .collect()
}

fn union_of(
    candidates: &[MaskSequence],
    ids: &[usize],
    t: usize,
    empty: &RleMask,
) -> Result<RleMask, MaskError> {
    ids.iter()
        .try_fold(empty.clone(), |acc, &i| match candidates[i].get(t) {
            Some(m) => acc.union(m),
            None => Ok(acc),
        })
}

fn check_dims(pred: &MaskSequence, candidates: &[MaskSequence]) -> Result<(), MaskError> {
    candidates.iter().try_for_each(|c| pred.check_same_dims(c))
}

/// Frame-independent matching. `validity` covers the frames to fuse; frames
/// missing from it are treated as invalid.
pub fn frame_level_fuse(
    pred: &MaskSequence,
    candidates: &[MaskSequence],
    validity: &BTreeMap<usize, bool>,
    tau_f: f64,
) -> Result<FrameFusion, MaskError> {
    check_dims(pred, candidates)?;
    let empty = pred.empty_mask();
    let mut fused = MaskSequence::new(pred.object_id(), pred.height(), pred.width())?;
    let mut matches = BTreeMap::new();
    let mut carried: Option<Vec<usize>> = None;
    for (&t, &valid) in validity {
        let mask = if valid {
            let p = pred.mask_at(t);
            let mut m = Vec::new();
            for (i, cand) in candidates.iter().enumerate() {
                if mask_iou(&p, &cand.mask_at(t))? >= tau_f {
                    m.push(i);
                }
            }
            let mask = if m.is_empty() {
                p
            } else {
                union_of(candidates, &m, t, &empty)?
            };
            carried = Some(m.clone());
            matches.insert(t, m);
            mask
        } else {
            match &carried {
                Some(ids) => union_of(candidates, ids, t, &empty)?,
                None => empty.clone(),
            }
        };
        fused.insert(t, mask)?;
    }
    Ok(FrameFusion { fused, matches })
}

/// Ratio of summed intersections to summed unions over all frames either
/// sequence stores; 1.0 when both are empty everywhere.
pub fn video_iou(a: &MaskSequence, b: &MaskSequence) -> Result<f64, MaskError> {
    a.check_same_dims(b)?;
    let frames: BTreeSet<usize> = a.frame_indices().chain(b.frame_indices()).collect();
    let (mut inter, mut union) = (0u64, 0u64);
    for t in frames {
        let (ma, mb) = (a.mask_at(t), b.mask_at(t));
        let i = ma.intersection_area(&mb)?;
        inter += i;
        union += ma.area() + mb.area() - i;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Selects candidates by whole-video IoU and unions them frame by frame.
/// Returns the output sequence and the ascending selection; with nothing
/// selected the output is `fused` unchanged.
pub fn instance_level_retrieve(
    fused: &MaskSequence,
    candidates: &[MaskSequence],
    tau_v: f64,
) -> Result<(MaskSequence, Vec<usize>), MaskError> {
    check_dims(fused, candidates)?;
    let mut selected = Vec::new();
    for (i, cand) in candidates.iter().enumerate() {
        if video_iou(fused, cand)? >= tau_v {
            selected.push(i);
        }
    }
    if selected.is_empty() {
        return Ok((fused.clone(), selected));
    }
    let frames: BTreeSet<usize> = fused
        .frame_indices()
        .chain(selected.iter().flat_map(|&i| candidates[i].frame_indices()))
        .collect();
    let empty = fused.empty_mask();
    let mut out = MaskSequence::new(fused.object_id(), fused.height(), fused.width())?;
    for t in frames {
        out.insert(t, union_of(candidates, &selected, t, &empty)?)?;
    }
    Ok((out, selected))
}

/// Runs all three stages over frames `0..frame_span(pred, candidates)`.
pub fn fuse(
    pred: &MaskSequence,
    candidates: &[MaskSequence],
    config: &FusionConfig,
) -> Result<FusionResult> {
    config.validate()?;
    let num_frames = frame_span(pred, candidates);
    let frame_validity = noise_filter(pred, num_frames, config.alpha);
    let frame = frame_level_fuse(pred, candidates, &frame_validity, config.tau_f)?;
    let (fused_frames, selected) = instance_level_retrieve(&frame.fused, candidates, config.tau_v)?;
    Ok(FusionResult {
        fused_frames,
        selected,
        per_frame_matches: frame.matches,
        frame_validity,
    })
}
