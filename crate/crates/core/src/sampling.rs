//! Frame sampling schemes: one random frame per segment across the whole
//! video ("global"), or a contiguous window ("local").

use std::fmt::Debug;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use thiserror::Error;

use crate::registry::{param_usize, Registry};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplingError {
    #[error("cannot sample {n} frames from a video of {total}")]
    TooMany { n: usize, total: usize },
    #[error("sample size must be at least 1")]
    Zero,
    #[error("window [{start}, {}) exceeds video length {total}", start + n)]
    WindowOutOfRange {
        start: usize,
        n: usize,
        total: usize,
    },
}

pub trait FrameSampler: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    /// Returns `n` strictly increasing frame indices in `[0, total)`.
    fn sample(&self, total: usize, n: usize, seed: u64) -> Result<Vec<usize>, SamplingError>;
}

fn check_counts(total: usize, n: usize) -> Result<(), SamplingError> {
    if n == 0 {
        return Err(SamplingError::Zero);
    }
    if n > total {
        return Err(SamplingError::TooMany { n, total });
    }
    Ok(())
}

/// Splits `[0, total)` into `n` contiguous segments; the first `total % n`
/// segments get one extra frame.
pub fn segments(total: usize, n: usize) -> Vec<std::ops::Range<usize>> {
    let (base, rem) = (total / n, total % n);
    let mut start = 0;
    (0..n)
        .map(|i| {
            let len = base + usize::from(i < rem);
            let seg = start..start + len;
            start += len;
            seg
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GlobalSampler;

impl FrameSampler for GlobalSampler {
    fn name(&self) -> &'static str {
        "global"
    }

    fn sample(&self, total: usize, n: usize, seed: u64) -> Result<Vec<usize>, SamplingError> {
        check_counts(total, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(segments(total, n)
            .into_iter()
            .map(|seg| rng.random_range(seg))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LocalSampler {
    pub window_start: usize,
}

impl FrameSampler for LocalSampler {
    fn name(&self) -> &'static str {
        "local"
    }

    fn sample(&self, total: usize, n: usize, _seed: u64) -> Result<Vec<usize>, SamplingError> {
        check_counts(total, n)?;
        let start = self.window_start;
        if start + n > total {
            return Err(SamplingError::WindowOutOfRange { start, n, total });
        }
        Ok((start..start + n).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Global,
    Local,
}

pub fn sample_frames(
    total: usize,
    n: usize,
    mode: SamplingMode,
    seed: u64,
    window_start: Option<usize>,
) -> Result<Vec<usize>, SamplingError> {
    match mode {
        SamplingMode::Global => GlobalSampler.sample(total, n, seed),
        SamplingMode::Local => LocalSampler {
            window_start: window_start.unwrap_or(0),
        }
        .sample(total, n, seed),
    }
}

/// Registered samplers: `global`, and `local` (parameter `window_start`, default 0).
pub fn sampler_registry() -> Registry<dyn FrameSampler> {
    let mut reg: Registry<dyn FrameSampler> = Registry::new("frame sampler");
    reg.register(
        "global",
        "one uniformly drawn frame per contiguous segment",
        |_| Ok(Box::new(GlobalSampler)),
    );
    reg.register(
        "local",
        "contiguous window starting at window_start",
        |p: &Value| {
            Ok(Box::new(LocalSampler {
                window_start: param_usize(p, "window_start")?.unwrap_or(0),
            }))
        },
    );
    reg
}
