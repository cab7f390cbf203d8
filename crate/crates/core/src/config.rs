//! Pipeline configuration, read from TOML and overridden by CLI flags.
//!
//! ```toml
//! seed = 0
//! jobs = 4
//!
//! [paths]
//! predictions = "pred/"
//! candidates = "cand/"
//! out = "fused/"
//!
//! [fusion]
//! alpha = 0.1
//! tau_f = 0.5
//! tau_v = 0.3
//!
//! [sampling]
//! mode = "global"
//! frames = 5
//!
//! [model]
//! queries = 5
//! channels = 16
//! selection = "threshold"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::nn::{LevelSpec, ModelConfig};
use crate::sampling::sampler_registry;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub predictions: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Model weight file; seeded weights are used when absent.
    pub weights: Option<PathBuf>,
    /// Precomputed backbone features replacing the built-in mask encoder.
    pub backbone: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Registered sampler name.
    pub mode: String,
    /// Frames to sample; `None` keeps every frame.
    pub frames: Option<usize>,
    pub window_start: Option<usize>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            mode: "global".into(),
            frames: None,
            window_start: None,
        }
    }
}

/// `[model]` section: network dimensions plus the selection rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub queries: usize,
    pub channels: usize,
    pub self_layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub levels: Vec<LevelSpec>,
    /// Registered candidate-selection rule name.
    pub selection: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::default();
        Self {
            queries: d.queries,
            channels: d.channels,
            self_layers: d.self_layers,
            heads: d.heads,
            ffn_dim: d.ffn_dim,
            levels: d.levels,
            selection: "threshold".into(),
        }
    }
}

impl ModelSection {
    pub fn dims(&self) -> ModelConfig {
        ModelConfig {
            queries: self.queries,
            channels: self.channels,
            self_layers: self.self_layers,
            heads: self.heads,
            ffn_dim: self.ffn_dim,
            levels: self.levels.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub jobs: usize,
    pub paths: Paths,
    pub fusion: FusionConfig,
    pub sampling: SamplingConfig,
    pub model: ModelSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 1,
            paths: Paths::default(),
            fusion: FusionConfig::default(),
            sampling: SamplingConfig::default(),
            model: ModelSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.fusion.validate()?;
        if !sampler_registry().contains(&self.sampling.mode) {
            return Err(Error::Config(format!(
                "unknown sampling mode {:?}",
                self.sampling.mode
            )));
        }
        if self.sampling.frames == Some(0) {
            return Err(Error::Config("sampling.frames must be at least 1".into()));
        }
        if !crate::nn::selection_registry().contains(&self.model.selection) {
            return Err(Error::Config(format!(
                "unknown selection rule {:?}",
                self.model.selection
            )));
        }
        self.model.dims().validate()?;
        for (name, p) in [
            ("predictions", &self.paths.predictions),
            ("candidates", &self.paths.candidates),
            ("gt", &self.paths.gt),
            ("out", &self.paths.out),
            ("weights", &self.paths.weights),
            ("backbone", &self.paths.backbone),
        ] {
            if p.as_ref().is_some_and(|p| p.as_os_str().is_empty()) {
                return Err(Error::Config(format!("path {name} is empty")));
            }
        }
        Ok(())
    }

    pub(crate) fn require<'a>(&self, path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        path.as_deref().ok_or_else(|| {
            Error::Usage(format!(
                "missing required --{flag} (or paths.{flag} in the config file)"
            ))
        })
    }
}
