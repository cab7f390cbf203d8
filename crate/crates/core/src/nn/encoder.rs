use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};
use crate::mask::rle_decode;
use crate::sequence::MaskSequence;
use crate::trajectory::{TrajectoryFeature, FEATURE_DIM};

/// Spatial grid and channel count of one feature level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

/// Per-level `T x h x w x c` features of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub levels: Vec<Tensor>,
}

impl FeatureMap {
    pub fn num_frames(&self) -> usize {
        self.levels.first().map_or(0, |l| l.shape()[0])
    }
}

fn level_dims(t: &Tensor) -> Result<(usize, usize, usize, usize), NnError> {
    match t.shape()[..] {
        [f, h, w, c] => Ok((f, h, w, c)),
        _ => Err(NnError::shape(
            "feature level",
            format!("expected T x h x w x c, got {:?}", t.shape()),
        )),
    }
}

/// Stand-in mask encoder: each grid cell holds the fraction of foreground
/// pixels it covers, repeated over the level's channels. Cell `(i, j)` of
/// an `h x w` grid covers rows `i*H/h .. (i+1)*H/h` and the analogous
/// columns (integer division); a cell covering no pixels is 0.
pub fn encode_instance(
    seq: &MaskSequence,
    num_frames: usize,
    levels: &[LevelSpec],
) -> Result<FeatureMap, NnError> {
    if levels.is_empty() {
        return Err(NnError::Config(
            "at least one feature level is required".into(),
        ));
    }
    if let Some(l) = levels
        .iter()
        .find(|l| l.height == 0 || l.width == 0 || l.channels == 0)
    {
        return Err(NnError::Config(format!("degenerate level {l:?}")));
    }
    let (img_h, img_w) = seq.dims();
    let dense: Vec<_> = (0..num_frames)
        .map(|t| seq.get(t).map(rle_decode))
        .collect();
    let mut out = Vec::with_capacity(levels.len());
    for level in levels {
        let mut values =
            Vec::with_capacity(num_frames * level.height * level.width * level.channels);
        for frame in &dense {
            for gy in 0..level.height {
                let rows = gy * img_h / level.height..(gy + 1) * img_h / level.height;
                for gx in 0..level.width {
                    let cols = gx * img_w / level.width..(gx + 1) * img_w / level.width;
                    let cell = rows.len() * cols.len();
                    let occupancy = match frame {
                        Some(m) if cell > 0 => {
                            let fg = rows
                                .clone()
                                .flat_map(|r| cols.clone().map(move |c| (r, c)))
                                .filter(|&(r, c)| m.get(r, c))
                                .count();
                            fg as f64 / cell as f64
                        }
                        _ => 0.0,
                    };
                    values.extend(std::iter::repeat_n(occupancy, level.channels));
                }
            }
        }
        out.push(Tensor::new(
            vec![num_frames, level.height, level.width, level.channels],
            values,
        )?);
    }
    Ok(FeatureMap { levels: out })
}

/// Adds `p_t * W_p` (one `8 x c_j` matrix per level) to every spatial
/// position of frame `t`.
pub fn inject_trajectory(
    feats: &FeatureMap,
    traj: &[TrajectoryFeature],
    traj_weights: &[Tensor],
) -> Result<FeatureMap, NnError> {
    if traj_weights.len() != feats.levels.len() {
        return Err(NnError::shape(
            "inject_trajectory",
            format!(
                "{} trajectory projections for {} levels",
                traj_weights.len(),
                feats.levels.len()
            ),
        ));
    }
    let mut out = Vec::with_capacity(feats.levels.len());
    for (level, wp) in feats.levels.iter().zip(traj_weights) {
        let (frames, h, w, c) = level_dims(level)?;
        if traj.len() != frames {
            return Err(NnError::shape(
                "inject_trajectory",
                format!(
                    "{} trajectory frames for {frames} feature frames",
                    traj.len()
                ),
            ));
        }
        if wp.matrix_dims() != Some((FEATURE_DIM, c)) {
            return Err(NnError::shape(
                "inject_trajectory",
                format!("projection {:?}, expected [{FEATURE_DIM}, {c}]", wp.shape()),
            ));
        }
        let p = Tensor::new(
            vec![frames, FEATURE_DIM],
            traj.iter().flat_map(|f| f.values).collect(),
        )?;
        let offsets = p.matmul(wp)?;
        let mut level = level.clone();
        for (t, frame) in level.values_mut().chunks_mut(h * w * c).enumerate() {
            let off = offsets.row(t);
            for cellv in frame.chunks_mut(c) {
                for (v, o) in cellv.iter_mut().zip(off) {
                    *v += o;
                }
            }
        }
        out.push(level);
    }
    Ok(FeatureMap { levels: out })
}

/// `token[t] = mean over spatial positions of (feats[t, y, x, :] * proj)`.
pub fn project_and_pool(level: &Tensor, proj: &Tensor) -> Result<Tensor, NnError> {
    let (frames, h, w, c) = level_dims(level)?;
    let (pc, channels) = proj.expect_matrix("project_and_pool")?;
    if pc != c {
        return Err(NnError::shape(
            "project_and_pool",
            format!("projection has {pc} input channels, features have {c}"),
        ));
    }
    let cells = h * w;
    let flat = Tensor::new(vec![frames * cells, c], level.values().to_vec())?;
    let projected = flat.matmul(proj)?;
    let mut tokens = Tensor::zeros(&[frames, channels]);
    for t in 0..frames {
        let out = tokens.row_mut(t);
        for cell in 0..cells {
            for (o, v) in out.iter_mut().zip(projected.row(t * cells + cell)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= cells as f64);
    }
    Ok(tokens)
}

/// Pools every level and stacks the per-level tokens along the token axis,
/// giving `(levels * T) x C` tokens.
pub fn instance_tokens(feats: &FeatureMap, projections: &[Tensor]) -> Result<Tensor, NnError> {
    if projections.len() != feats.levels.len() {
        return Err(NnError::shape(
            "instance_tokens",
            format!(
                "{} projections for {} levels",
                projections.len(),
                feats.levels.len()
            ),
        ));
    }
    let pooled = feats
        .levels
        .iter()
        .zip(projections)
        .map(|(l, p)| project_and_pool(l, p))
        .collect::<Result<Vec<_>, _>>()?;
    Tensor::vstack(&pooled)
}
