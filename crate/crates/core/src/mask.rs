//! Binary masks in dense and run-length form.
//!
//! Run-length masks follow the COCO convention: counts alternate
//! background / foreground runs, starting with background, over the pixels
//! in column-major order (down column 0, then column 1, ...). Only the first
//! count may be zero.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("mask dimensions must be positive, got {height}x{width}")]
    InvalidDimensions { height: usize, width: usize },
    #[error("dense mask has {actual} pixels, expected {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("malformed rle: counts sum to {actual}, expected {expected} ({height}x{width})")]
    MalformedRle {
        height: usize,
        width: usize,
        expected: u64,
        actual: u64,
    },
    #[error("malformed rle: zero-length run at interior position {index}")]
    InteriorZeroRun { index: usize },
    #[error("dimension mismatch: {a_height}x{a_width} vs {b_height}x{b_width}")]
    DimensionMismatch {
        a_height: usize,
        a_width: usize,
        b_height: usize,
        b_width: usize,
    },
}

fn check_dims(height: usize, width: usize) -> Result<(), MaskError> {
    if height == 0 || width == 0 {
        return Err(MaskError::InvalidDimensions { height, width });
    }
    Ok(())
}

/// Dense boolean mask, stored row-major with row 0 at the top.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    /// All-background mask.
    pub fn new(height: usize, width: usize) -> Result<Self, MaskError> {
        check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            data: vec![false; height * width],
        })
    }

    /// Builds a mask from row-major data.
    pub fn from_vec(height: usize, width: usize, data: Vec<bool>) -> Result<Self, MaskError> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(MaskError::DataLength {
                expected: height * width,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds a mask by evaluating `f(row, col)` for every pixel.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, MaskError> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Row-major pixel data.
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn count(&self) -> u64 {
        self.data.iter().filter(|&&v| v).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Foreground pixels as `(row, col)`, in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let width = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (i / width, i % width))
    }

    pub fn bbox(&self) -> Option<Bbox> {
        let mut bbox: Option<Bbox> = None;
        for (row, col) in self.foreground() {
            match bbox.as_mut() {
                None => {
                    bbox = Some(Bbox {
                        x_min: col,
                        y_min: row,
                        x_max: col,
                        y_max: row,
                    })
                }
                Some(b) => {
                    b.x_min = b.x_min.min(col);
                    b.x_max = b.x_max.max(col);
                    b.y_max = b.y_max.max(row);
                }
            }
        }
        bbox
    }
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinaryMask {}x{}", self.height, self.width)?;
        for row in 0..self.height {
            let line: String = (0..self.width)
                .map(|col| if self.get(row, col) { '#' } else { '.' })
                .collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

/// Tight bounding box with inclusive pixel indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bbox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl Bbox {
    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn area(&self) -> u64 {
        (self.width() * self.height()) as u64
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn to_array(&self) -> [usize; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Column-major run-length mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RleMask {
    height: usize,
    width: usize,
    counts: Vec<u32>,
}

impl RleMask {
    /// Validates `counts` against the run-length invariants.
    pub fn new(height: usize, width: usize, counts: Vec<u32>) -> Result<Self, MaskError> {
        check_dims(height, width)?;
        let expected = (height * width) as u64;
        let actual: u64 = counts.iter().map(|&c| c as u64).sum();
        if actual != expected {
            return Err(MaskError::MalformedRle {
                height,
                width,
                expected,
                actual,
            });
        }
        if let Some(index) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(MaskError::InteriorZeroRun { index: index + 1 });
        }
        Ok(Self {
            height,
            width,
            counts,
        })
    }

    /// All-background mask.
    pub fn empty(height: usize, width: usize) -> Result<Self, MaskError> {
        check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            counts: vec![(height * width) as u32],
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn area(&self) -> u64 {
        mask_area(self)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.len() < 2
    }

    pub fn bbox(&self) -> Option<Bbox> {
        let h = self.height;
        let mut bbox: Option<Bbox> = None;
        let mut pos = 0usize;
        for (i, &c) in self.counts.iter().enumerate() {
            let c = c as usize;
            if i % 2 == 1 && c > 0 {
                let (start, end) = (pos, pos + c - 1);
                let (col_s, col_e) = (start / h, end / h);
                let (row_s, row_e) = if col_s == col_e {
                    (start % h, end % h)
                } else {
                    (0, h - 1)
                };
                let run = Bbox {
                    x_min: col_s,
                    y_min: row_s,
                    x_max: col_e,
                    y_max: row_e,
                };
                bbox = Some(match bbox {
                    None => run,
                    Some(b) => Bbox {
                        x_min: b.x_min.min(run.x_min),
                        y_min: b.y_min.min(run.y_min),
                        x_max: b.x_max.max(run.x_max),
                        y_max: b.y_max.max(run.y_max),
                    },
                });
            }
            pos += c;
        }
        bbox
    }

    fn check_same_dims(&self, other: &RleMask) -> Result<(), MaskError> {
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

    /// Number of pixels set in both masks.
    pub fn intersection_area(&self, other: &RleMask) -> Result<u64, MaskError> {
        self.check_same_dims(other)?;
        let mut inter = 0u64;
        merge_runs(&self.counts, &other.counts, |len, a, b| {
            if a && b {
                inter += len;
            }
        });
        Ok(inter)
    }

    /// Pixel-wise OR, computed on runs.
    pub fn union(&self, other: &RleMask) -> Result<RleMask, MaskError> {
        self.check_same_dims(other)?;
        let mut builder = RunBuilder::default();
        merge_runs(&self.counts, &other.counts, |len, a, b| {
            builder.push(len, a || b)
        });
        Ok(RleMask {
            height: self.height,
            width: self.width,
            counts: builder.finish(),
        })
    }
}

/// Accumulates alternating runs, merging adjacent runs of equal value.
#[derive(Debug)]
struct RunBuilder {
    counts: Vec<u32>,
    current: bool,
}

impl Default for RunBuilder {
    fn default() -> Self {
        Self {
            counts: vec![0],
            current: false,
        }
    }
}

impl RunBuilder {
    fn push(&mut self, len: u64, value: bool) {
        if len == 0 {
            return;
        }
        if value != self.current {
            self.counts.push(0);
            self.current = value;
        }
        *self.counts.last_mut().expect("never empty") += len as u32;
    }

    fn finish(self) -> Vec<u32> {
        self.counts
    }
}

struct RunCursor<'a> {
    counts: &'a [u32],
    index: usize,
    left: u64,
}

impl<'a> RunCursor<'a> {
    fn new(counts: &'a [u32]) -> Self {
        let mut cursor = Self {
            counts,
            index: 0,
            left: counts.first().copied().unwrap_or(0) as u64,
        };
        cursor.skip_empty();
        cursor
    }

    fn skip_empty(&mut self) {
        while self.left == 0 && self.index < self.counts.len() {
            self.index += 1;
            self.left = self.counts.get(self.index).copied().unwrap_or(0) as u64;
        }
    }

    fn peek(&self) -> Option<(u64, bool)> {
        (self.index < self.counts.len()).then_some((self.left, self.index % 2 == 1))
    }

    fn advance(&mut self, n: u64) {
        self.left -= n;
        self.skip_empty();
    }
}

/// Walks two run lists of equal total length, calling `f(len, a, b)` for
/// each maximal segment where both values are constant.
fn merge_runs(a: &[u32], b: &[u32], mut f: impl FnMut(u64, bool, bool)) {
    let mut ca = RunCursor::new(a);
    let mut cb = RunCursor::new(b);
    while let (Some((la, va)), Some((lb, vb))) = (ca.peek(), cb.peek()) {
        let step = la.min(lb);
        f(step, va, vb);
        ca.advance(step);
        cb.advance(step);
    }
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let mut builder = RunBuilder::default();
    for col in 0..mask.width {
        for row in 0..mask.height {
            builder.push(1, mask.get(row, col));
        }
    }
    RleMask {
        height: mask.height,
        width: mask.width,
        counts: builder.finish(),
    }
}

pub fn rle_decode(rle: &RleMask) -> BinaryMask {
    let (h, w) = rle.dims();
    let mut data = vec![false; h * w];
    let mut pos = 0usize;
    for (i, &c) in rle.counts.iter().enumerate() {
        let c = c as usize;
        if i % 2 == 1 {
            for p in pos..pos + c {
                let (col, row) = (p / h, p % h);
                data[row * w + col] = true;
            }
        }
        pos += c;
    }
    BinaryMask {
        height: h,
        width: w,
        data,
    }
}

/// Foreground pixel count: the sum of the odd-indexed runs.
pub fn mask_area(rle: &RleMask) -> u64 {
    rle.counts
        .iter()
        .skip(1)
        .step_by(2)
        .map(|&c| c as u64)
        .sum()
}

/// Intersection over union computed on runs. Two empty masks have IoU 1.
pub fn mask_iou(a: &RleMask, b: &RleMask) -> Result<f64, MaskError> {
    let inter = a.intersection_area(b)?;
    let union = mask_area(a) + mask_area(b) - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

pub fn bbox_from_mask(mask: &BinaryMask) -> Option<Bbox> {
    mask.bbox()
}

/// Foreground pixels with at least one 4-neighbour that is background or
/// outside the image.
pub fn boundary_map(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = (mask.height, mask.width);
    let fg = |r: isize, c: isize| {
        r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && mask.get(r as usize, c as usize)
    };
    let mut out = BinaryMask {
        height: h,
        width: w,
        data: vec![false; h * w],
    };
    for (row, col) in mask.foreground() {
        let (r, c) = (row as isize, col as isize);
        if !(fg(r - 1, c) && fg(r + 1, c) && fg(r, c - 1) && fg(r, c + 1)) {
            out.set(row, col, true);
        }
    }
    out
}
