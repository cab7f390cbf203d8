//! Model weights: seeded generation and the named-tensor file layout.
//!
//! | name                                   | shape        |
//! |----------------------------------------|--------------|
//! | `cross.{wq,wk,wv,wo}`                  | `C x C`      |
//! | `cross_norm.{gamma,beta}`              | `C`          |
//! | `self.{i}.{wq,wk,wv,wo}`               | `C x C`      |
//! | `self.{i}.norm.{gamma,beta}`           | `C`          |
//! | `ffn.w1`, `ffn.b1`, `ffn.w2`, `ffn.b2` | `C x F`, `F`, `F x C`, `C` |
//! | `ffn_norm.{gamma,beta}`                | `C`          |
//! | `level.{j}.traj`                       | `8 x c_j`    |
//! | `level.{j}.proj`                       | `c_j x C`    |
//! | `classifier.w`, `classifier.b`         | `C x 1`, `1` |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::attention::{AttentionWeights, BlockWeights, FeedForward, LayerNorm};
use super::encoder::LevelSpec;
use super::retrieval::Classifier;
use super::{NnError, Tensor, TensorMap};
use crate::trajectory::FEATURE_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of queries `N`.
    pub queries: usize,
    /// Model width `C`.
    pub channels: usize,
    /// Number of self-attention layers `L_s`.
    pub self_layers: usize,
    pub heads: usize,
    /// Hidden width of the feed-forward layer.
    pub ffn_dim: usize,
    pub levels: Vec<LevelSpec>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            queries: 5,
            channels: 16,
            self_layers: 2,
            heads: 1,
            ffn_dim: 64,
            levels: vec![LevelSpec {
                height: 8,
                width: 8,
                channels: 8,
            }],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.queries == 0 || self.channels == 0 || self.ffn_dim == 0 || self.heads == 0 {
            return Err(NnError::Config(
                "queries, channels, ffn_dim and heads must be positive".into(),
            ));
        }
        if !self.channels.is_multiple_of(self.heads) {
            return Err(NnError::Config(format!(
                "{} heads do not divide {} channels",
                self.heads, self.channels
            )));
        }
        if self
            .levels
            .iter()
            .any(|l| l.height == 0 || l.width == 0 || l.channels == 0)
        {
            return Err(NnError::Config(
                "feature levels must have positive sizes".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelWeights {
    /// Trajectory injection, `8 x c_j`.
    pub traj: Tensor,
    /// Projection to model width, `c_j x C`.
    pub proj: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub block: BlockWeights,
    pub levels: Vec<LevelWeights>,
    pub classifier: Classifier,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn matrix(&mut self, rows: usize, cols: usize) -> Tensor {
        let normal = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("valid std");
        Tensor::from_fn(rows, cols, |_, _| normal.sample(&mut self.rng))
    }

    fn attention(&mut self, c: usize) -> AttentionWeights {
        AttentionWeights {
            wq: self.matrix(c, c),
            wk: self.matrix(c, c),
            wv: self.matrix(c, c),
            wo: self.matrix(c, c),
        }
    }
}

impl ModelWeights {
    /// Deterministic weights: matrices drawn from `normal(0, 1/fan_in)`,
    /// biases zero, norms identity.
    pub fn seeded(config: &ModelConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let c = config.channels;
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let cross = init.attention(c);
        let self_layers = (0..config.self_layers)
            .map(|_| (init.attention(c), LayerNorm::identity(c)))
            .collect();
        let ffn = FeedForward {
            w1: init.matrix(c, config.ffn_dim),
            b1: Tensor::zeros(&[config.ffn_dim]),
            w2: init.matrix(config.ffn_dim, c),
            b2: Tensor::zeros(&[c]),
        };
        let levels = config
            .levels
            .iter()
            .map(|l| LevelWeights {
                traj: init.matrix(FEATURE_DIM, l.channels),
                proj: init.matrix(l.channels, c),
            })
            .collect();
        let classifier = Classifier {
            weight: init.matrix(c, 1),
            bias: 0.0,
        };
        Ok(Self {
            block: BlockWeights {
                heads: config.heads,
                cross,
                cross_norm: LayerNorm::identity(c),
                self_layers,
                ffn,
                ffn_norm: LayerNorm::identity(c),
            },
            levels,
            classifier,
        })
    }

    pub fn to_tensor_map(&self) -> TensorMap {
        let mut map = TensorMap::new();
        let mut put = |name: String, t: &Tensor| {
            map.insert(name, t.clone());
        };
        let attn = |put: &mut dyn FnMut(String, &Tensor), prefix: &str, w: &AttentionWeights| {
            put(format!("{prefix}.wq"), &w.wq);
            put(format!("{prefix}.wk"), &w.wk);
            put(format!("{prefix}.wv"), &w.wv);
            put(format!("{prefix}.wo"), &w.wo);
        };
        let norm = |put: &mut dyn FnMut(String, &Tensor), prefix: &str, n: &LayerNorm| {
            put(format!("{prefix}.gamma"), &n.gamma);
            put(format!("{prefix}.beta"), &n.beta);
        };
        let b = &self.block;
        attn(&mut put, "cross", &b.cross);
        norm(&mut put, "cross_norm", &b.cross_norm);
        for (i, (w, n)) in b.self_layers.iter().enumerate() {
            attn(&mut put, &format!("self.{i}"), w);
            norm(&mut put, &format!("self.{i}.norm"), n);
        }
        put("ffn.w1".into(), &b.ffn.w1);
        put("ffn.b1".into(), &b.ffn.b1);
        put("ffn.w2".into(), &b.ffn.w2);
        put("ffn.b2".into(), &b.ffn.b2);
        norm(&mut put, "ffn_norm", &b.ffn_norm);
        for (j, l) in self.levels.iter().enumerate() {
            put(format!("level.{j}.traj"), &l.traj);
            put(format!("level.{j}.proj"), &l.proj);
        }
        put("classifier.w".into(), &self.classifier.weight);
        put(
            "classifier.b".into(),
            &Tensor::filled(&[1], self.classifier.bias),
        );
        map
    }

    /// Rebuilds weights from named tensors. Width, layer count, hidden size
    /// and levels are inferred from the tensors; `heads` is not stored.
    pub fn from_tensor_map(map: &TensorMap, heads: usize) -> Result<Self, NnError> {
        let get = |name: &str, shape: &[usize]| -> Result<Tensor, NnError> {
            let t = map
                .get(name)
                .ok_or_else(|| NnError::MissingWeight(name.into()))?;
            if t.shape() != shape {
                return Err(NnError::shape(
                    "weights",
                    format!("{name} has shape {:?}, expected {shape:?}", t.shape()),
                ));
            }
            Ok(t.clone())
        };
        let c = map
            .get("cross.wq")
            .and_then(Tensor::matrix_dims)
            .map(|(r, _)| r)
            .ok_or_else(|| NnError::MissingWeight("cross.wq".into()))?;
        if heads == 0 || c % heads != 0 {
            return Err(NnError::Config(format!(
                "{heads} heads do not divide {c} channels"
            )));
        }
        let attn = |prefix: &str| -> Result<AttentionWeights, NnError> {
            Ok(AttentionWeights {
                wq: get(&format!("{prefix}.wq"), &[c, c])?,
                wk: get(&format!("{prefix}.wk"), &[c, c])?,
                wv: get(&format!("{prefix}.wv"), &[c, c])?,
                wo: get(&format!("{prefix}.wo"), &[c, c])?,
            })
        };
        let norm = |prefix: &str| -> Result<LayerNorm, NnError> {
            Ok(LayerNorm {
                gamma: get(&format!("{prefix}.gamma"), &[c])?,
                beta: get(&format!("{prefix}.beta"), &[c])?,
                eps: 0.0,
            })
        };
        let mut self_layers = Vec::new();
        while map.contains_key(&format!("self.{}.wq", self_layers.len())) {
            let i = self_layers.len();
            self_layers.push((
                attn(&format!("self.{i}"))?,
                norm(&format!("self.{i}.norm"))?,
            ));
        }
        let ffn_dim = map
            .get("ffn.w1")
            .and_then(Tensor::matrix_dims)
            .map(|(_, f)| f)
            .ok_or_else(|| NnError::MissingWeight("ffn.w1".into()))?;
        let ffn = FeedForward {
            w1: get("ffn.w1", &[c, ffn_dim])?,
            b1: get("ffn.b1", &[ffn_dim])?,
            w2: get("ffn.w2", &[ffn_dim, c])?,
            b2: get("ffn.b2", &[c])?,
        };
        let mut levels = Vec::new();
        while let Some(traj) = map.get(&format!("level.{}.traj", levels.len())) {
            let j = levels.len();
            let cj = traj
                .matrix_dims()
                .filter(|&(r, _)| r == FEATURE_DIM)
                .map(|(_, cj)| cj)
                .ok_or_else(|| {
                    NnError::shape(
                        "weights",
                        format!("level.{j}.traj must be {FEATURE_DIM} x c_j"),
                    )
                })?;
            levels.push(LevelWeights {
                traj: traj.clone(),
                proj: get(&format!("level.{j}.proj"), &[cj, c])?,
            });
        }
        let classifier = Classifier {
            weight: get("classifier.w", &[c, 1])?,
            bias: match map.get("classifier.b") {
                Some(b) if b.values().len() == 1 => b.values()[0],
                Some(_) => {
                    return Err(NnError::shape(
                        "weights",
                        "classifier.b must hold one value",
                    ))
                }
                None => 0.0,
            },
        };
        Ok(Self {
            block: BlockWeights {
                heads,
                cross: attn("cross")?,
                cross_norm: norm("cross_norm")?,
                self_layers,
                ffn,
                ffn_norm: norm("ffn_norm")?,
            },
            levels,
            classifier,
        })
    }
}
