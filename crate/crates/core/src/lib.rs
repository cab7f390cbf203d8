//! Mask utilities, prompt and trajectory generation, a small attention
//! kernel, two-stage mask fusion and J&F evaluation for referring video
//! object segmentation.
//!
//! Masks are stored as column-major run-length encodings ([`RleMask`]) and
//! grouped per object into [`MaskSequence`]s. The [`pipeline`] module ties
//! the pieces to files; the `rvosfuse` binary exposes it on the command line.

pub mod config;
pub mod error;
pub mod fusion;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod prompt;
pub mod registry;
pub mod sampling;
pub mod sequence;
pub mod trajectory;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use fusion::{fuse, FusionConfig, FusionResult};
pub use io::VideoMasks;
pub use mask::{
    bbox_from_mask, boundary_map, mask_area, mask_iou, rle_decode, rle_encode, Bbox, BinaryMask,
    MaskError, RleMask,
};
pub use metrics::{contour_accuracy, jf_report, region_similarity, MetricsReport};
pub use prompt::{sample_prompts, Point, PromptSet};
pub use sampling::{sample_frames, FrameSampler, SamplingMode};
pub use sequence::MaskSequence;
pub use trajectory::{positional_features, TrajectoryFeature};
