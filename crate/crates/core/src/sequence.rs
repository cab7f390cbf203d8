use std::collections::BTreeMap;

use crate::mask::{MaskError, RleMask};

/// One object's masks over a video. Frames not present in the map are empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSequence {
    object_id: String,
    height: usize,
    width: usize,
    frames: BTreeMap<usize, RleMask>,
}

impl MaskSequence {
    pub fn new(
        object_id: impl Into<String>,
        height: usize,
        width: usize,
    ) -> Result<Self, MaskError> {
        // validates the dimensions
        RleMask::empty(height, width)?;
        Ok(Self {
            object_id: object_id.into(),
            height,
            width,
            frames: BTreeMap::new(),
        })
    }

    /// Builds a sequence from `(t, mask)` pairs; later duplicates replace earlier ones.
    pub fn from_frames(
        object_id: impl Into<String>,
        height: usize,
        width: usize,
        frames: impl IntoIterator<Item = (usize, RleMask)>,
    ) -> Result<Self, MaskError> {
        let mut seq = Self::new(object_id, height, width)?;
        for (t, mask) in frames {
            seq.insert(t, mask)?;
        }
        Ok(seq)
    }

    pub fn object_id(&self) -> &str {
        &self.object_id
    }

    pub fn set_object_id(&mut self, id: impl Into<String>) {
        self.object_id = id.into();
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn insert(&mut self, t: usize, mask: RleMask) -> Result<(), MaskError> {
        if mask.dims() != self.dims() {
            return Err(MaskError::DimensionMismatch {
                a_height: self.height,
                a_width: self.width,
                b_height: mask.height(),
                b_width: mask.width(),
            });
        }
        self.frames.insert(t, mask);
        Ok(())
    }

    /// Stored frame, if any.
    pub fn get(&self, t: usize) -> Option<&RleMask> {
        self.frames.get(&t)
    }

    /// Mask at `t`, empty when the frame is absent.
    pub fn mask_at(&self, t: usize) -> RleMask {
        self.frames
            .get(&t)
            .cloned()
            .unwrap_or_else(|| self.empty_mask())
    }

    pub fn empty_mask(&self) -> RleMask {
        RleMask::empty(self.height, self.width).expect("dimensions validated at construction")
    }

    pub fn frames(&self) -> impl Iterator<Item = (usize, &RleMask)> {
        self.frames.iter().map(|(&t, m)| (t, m))
    }

    pub fn frame_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.frames.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// One past the largest stored frame index, or 0.
    pub fn frame_span(&self) -> usize {
        self.frames.keys().next_back().map_or(0, |&t| t + 1)
    }

    /// Same foreground at every frame index, treating absent frames as empty.
    pub fn same_masks(&self, other: &MaskSequence) -> bool {
        if self.dims() != other.dims() {
            return false;
        }
        let span = self.frame_span().max(other.frame_span());
        (0..span).all(|t| self.mask_at(t) == other.mask_at(t))
    }

    pub fn check_same_dims(&self, other: &MaskSequence) -> Result<(), MaskError> {
        if self.dims() != other.dims() {
            return Err(MaskError::DimensionMismatch {
                a_height: self.height,
                a_width: self.width,
                b_height: other.height,
                b_width: other.width,
            });
        }
        Ok(())
    }
}
