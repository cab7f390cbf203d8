//! File-level workflows behind the CLI subcommands.
//!
//! Work is split per (video, object) and may run on a bounded thread pool;
//! results are gathered in sorted id order and every output is assembled
//! before the first file is written, so worker count never changes bytes
//! and a failing run leaves no partial output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::fusion::fuse;
use crate::io::{load_mask_inputs, write_all_atomic, VideoMasks, FORMAT_VERSION};
use crate::mask::rle_decode;
use crate::metrics::{contour_accuracy, jf_report, region_similarity, MetricsReport};
use crate::nn::{
    aggregate_queries, encode_instance, inject_trajectory, instance_tokens, load_tensor_file,
    FeatureMap, LevelSpec, ModelWeights, Tensor, TensorMap,
};
use crate::prompt::sample_prompts;
use crate::sampling::sampler_registry;
use crate::sequence::MaskSequence;
use crate::trajectory::{positional_features, FEATURE_DIM};

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stable per-item seed from a base seed and identifying strings.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.bytes().chain([0xff]) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    splitmix64(base ^ h)
}

/// File-name-safe form of a video name.
fn file_stem(video: &str) -> String {
    video
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs `f` on a pool of `jobs` threads. Parallel stages collect every
/// result in input order so the first reported error does not depend on
/// scheduling.
fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(f))
}

fn prepare_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec(value).expect("report serializes");
    v.push(b'\n');
    v
}

fn sorted_sequences(video: &VideoMasks) -> Vec<&MaskSequence> {
    let mut seqs: Vec<&MaskSequence> = video.sequences.iter().collect();
    seqs.sort_by(|a, b| a.object_id().cmp(b.object_id()));
    seqs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionReport {
    pub id: String,
    pub selected: Vec<String>,
    pub frame_matches: BTreeMap<usize, Vec<String>>,
    pub valid_frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub format_version: u32,
    pub video: String,
    pub expressions: Vec<ExpressionReport>,
}

/// Fuses every prediction with the candidates of the same video. Writes
/// `masks/<video>.json` and `reports/<video>.fusion.json` under the output
/// directory and returns the written paths.
pub fn run_fuse(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let pred_path = config.require(&config.paths.predictions, "predictions")?;
    let cand_path = config.require(&config.paths.candidates, "candidates")?;
    let out = config.require(&config.paths.out, "out")?;
    let preds = load_mask_inputs(pred_path)?;
    let cands = load_mask_inputs(cand_path)?;
    let cand_by_video: BTreeMap<&str, (&PathBuf, &VideoMasks)> = cands
        .iter()
        .map(|(p, v)| (v.video.as_str(), (p, v)))
        .collect();

    let mut items = Vec::new();
    for (path, video) in &preds {
        let (cpath, cvideo) = cand_by_video.get(video.video.as_str()).ok_or_else(|| {
            Error::data(
                path,
                "",
                format!("no candidates for video {:?}", video.video),
            )
        })?;
        if (cvideo.height, cvideo.width) != (video.height, video.width) {
            return Err(Error::data(
                *cpath,
                "",
                format!(
                    "video {:?} is {}x{} in candidates but {}x{} in {}",
                    video.video,
                    cvideo.height,
                    cvideo.width,
                    video.height,
                    video.width,
                    path.display()
                ),
            ));
        }
        for seq in sorted_sequences(video) {
            items.push((path, video, *cvideo, seq));
        }
    }
    info!(
        "fusing {} expressions over {} videos with {} workers",
        items.len(),
        preds.len(),
        config.jobs
    );

    let results = in_pool(config.jobs, || {
        items
            .par_iter()
            .map(|(path, _, cvideo, seq)| {
                debug!("fuse {}", seq.object_id());
                fuse(seq, &cvideo.sequences, &config.fusion)
                    .map_err(|e| Error::data(*path, seq.object_id(), e))
            })
            .collect::<Vec<Result<_>>>()
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut per_video: BTreeMap<&str, (VideoMasks, FusionReport)> = BTreeMap::new();
    for ((_, video, cvideo, seq), result) in items.iter().zip(results) {
        let entry = per_video.entry(video.video.as_str()).or_insert_with(|| {
            (
                VideoMasks::new(&video.video, video.height, video.width),
                FusionReport {
                    format_version: FORMAT_VERSION,
                    video: video.video.clone(),
                    expressions: Vec::new(),
                },
            )
        });
        let cand_id = |i: &usize| cvideo.sequences[*i].object_id().to_string();
        entry.1.expressions.push(ExpressionReport {
            id: seq.object_id().to_string(),
            selected: result.selected.iter().map(cand_id).collect(),
            frame_matches: result
                .per_frame_matches
                .iter()
                .map(|(&t, ids)| (t, ids.iter().map(cand_id).collect()))
                .collect(),
            valid_frames: result
                .frame_validity
                .iter()
                .filter(|(_, &v)| v)
                .map(|(&t, _)| t)
                .collect(),
        });
        let mut fused = result.fused_frames;
        fused.set_object_id(seq.object_id());
        entry.0.sequences.push(fused);
    }

    let mut outputs = Vec::new();
    for (video, (masks, report)) in &per_video {
        let stem = file_stem(video);
        outputs.push((
            out.join("masks").join(format!("{stem}.json")),
            masks.to_json_string().into_bytes(),
        ));
        outputs.push((
            out.join("reports").join(format!("{stem}.fusion.json")),
            to_json_bytes(report),
        ));
    }
    prepare_out_dir(&out.join("masks"))?;
    prepare_out_dir(&out.join("reports"))?;
    write_all_atomic(&outputs)?;
    Ok(outputs.into_iter().map(|(p, _)| p).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct EvalFile<'a> {
    format_version: u32,
    #[serde(flatten)]
    report: &'a MetricsReport,
}

/// Scores predictions against ground truth; object ids are `video/object`.
/// Writes the rounded report to `paths.out` and returns it.
pub fn run_eval(config: &PipelineConfig) -> Result<MetricsReport> {
    config.validate()?;
    let pred_path = config.require(&config.paths.predictions, "predictions")?;
    let gt_path = config.require(&config.paths.gt, "gt")?;
    let out = config.require(&config.paths.out, "out")?;
    let preds = load_mask_inputs(pred_path)?;
    let gts = load_mask_inputs(gt_path)?;

    let key = |v: &VideoMasks, s: &MaskSequence| format!("{}/{}", v.video, s.object_id());
    let pred_index: BTreeMap<String, (&Path, &MaskSequence)> = preds
        .iter()
        .flat_map(|(p, v)| {
            v.sequences
                .iter()
                .map(move |s| (key(v, s), (p.as_path(), s)))
        })
        .collect();
    let gt_index: BTreeMap<String, (&Path, &MaskSequence)> = gts
        .iter()
        .flat_map(|(p, v)| {
            v.sequences
                .iter()
                .map(move |s| (key(v, s), (p.as_path(), s)))
        })
        .collect();
    let missing_pred: Vec<&str> = gt_index
        .keys()
        .filter(|k| !pred_index.contains_key(*k))
        .map(String::as_str)
        .collect();
    if !missing_pred.is_empty() {
        return Err(Error::data(
            pred_path,
            missing_pred.join(", "),
            "ground-truth objects missing from predictions",
        ));
    }
    let missing_gt: Vec<&str> = pred_index
        .keys()
        .filter(|k| !gt_index.contains_key(*k))
        .map(String::as_str)
        .collect();
    if !missing_gt.is_empty() {
        return Err(Error::data(
            gt_path,
            missing_gt.join(", "),
            "predicted objects missing from ground truth",
        ));
    }

    let pairs: Vec<(&String, &MaskSequence, &MaskSequence, &Path)> = gt_index
        .iter()
        .map(|(k, (gpath, g))| (k, pred_index[k].1, *g, *gpath))
        .collect();
    info!(
        "evaluating {} objects with {} workers",
        pairs.len(),
        config.jobs
    );
    let scores = in_pool(config.jobs, || {
        pairs
            .par_iter()
            .map(|(k, p, g, gpath)| {
                let j = region_similarity(p, g).map_err(|e| Error::data(*gpath, k.as_str(), e))?;
                let f = contour_accuracy(p, g).map_err(|e| Error::data(*gpath, k.as_str(), e))?;
                Ok(((*k).clone(), 100.0 * j, 100.0 * f))
            })
            .collect::<Vec<Result<_>>>()
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let report = jf_report(scores)
        .map_err(|e| Error::data(gt_path, "", e))?
        .rounded();
    let bytes = to_json_bytes(&EvalFile {
        format_version: FORMAT_VERSION,
        report: &report,
    });
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        prepare_out_dir(dir)?;
    }
    write_all_atomic(&[(out.to_path_buf(), bytes)])?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub t: usize,
    #[serde(rename = "box")]
    pub bbox: Option<[usize; 4]>,
    pub positive: Vec<[usize; 2]>,
    pub negative: Vec<[usize; 2]>,
    pub labels: Vec<u8>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPrompts {
    pub id: String,
    pub prompts: Vec<PromptRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFile {
    pub format_version: u32,
    pub video: String,
    pub seed: u64,
    pub objects: Vec<ObjectPrompts>,
}

/// Samples prompts for every stored frame of every object. Each frame's
/// seed is derived from the run seed, the video, the object id and the frame
/// index. Writes `<video>.prompts.json` files.
pub fn run_prompts(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let pred_path = config.require(&config.paths.predictions, "predictions")?;
    let out = config.require(&config.paths.out, "out")?;
    let videos = load_mask_inputs(pred_path)?;
    let items: Vec<(&VideoMasks, &MaskSequence)> = videos
        .iter()
        .flat_map(|(_, v)| sorted_sequences(v).into_iter().map(move |s| (v, s)))
        .collect();
    let seed = config.seed;
    let prompts = in_pool(config.jobs, || {
        items
            .par_iter()
            .map(|(video, seq)| ObjectPrompts {
                id: seq.object_id().to_string(),
                prompts: seq
                    .frames()
                    .map(|(t, rle)| {
                        let frame_seed =
                            derive_seed(seed, &[&video.video, seq.object_id(), &t.to_string()]);
                        let p = sample_prompts(&rle_decode(rle), frame_seed);
                        PromptRecord {
                            t,
                            bbox: p.bbox.map(|b| b.to_array()),
                            positive: p.positive.iter().map(|q| [q.x, q.y]).collect(),
                            negative: p.negative.iter().map(|q| [q.x, q.y]).collect(),
                            labels: p.labels(),
                            seed: frame_seed,
                        }
                    })
                    .collect(),
            })
            .collect::<Vec<_>>()
    })?;

    let mut files: BTreeMap<&str, PromptFile> = BTreeMap::new();
    for ((video, _), obj) in items.iter().zip(prompts) {
        files
            .entry(video.video.as_str())
            .or_insert_with(|| PromptFile {
                format_version: FORMAT_VERSION,
                video: video.video.clone(),
                seed,
                objects: Vec::new(),
            })
            .objects
            .push(obj);
    }
    let outputs: Vec<(PathBuf, Vec<u8>)> = files
        .iter()
        .map(|(video, file)| {
            (
                out.join(format!("{}.prompts.json", file_stem(video))),
                to_json_bytes(file),
            )
        })
        .collect();
    prepare_out_dir(out)?;
    write_all_atomic(&outputs)?;
    Ok(outputs.into_iter().map(|(p, _)| p).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectFeatures {
    pub object_id: String,
    pub features: Vec<[f64; FEATURE_DIM]>,
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFile {
    pub format_version: u32,
    pub video: String,
    /// Source frame index of each feature row.
    pub frames: Vec<usize>,
    pub objects: Vec<ObjectFeatures>,
    /// Aggregated instance query, present when query initialization ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<Tensor>,
}

/// Rows `frames` of the leading axis.
fn select_frames(t: &Tensor, frames: &[usize]) -> Result<Tensor> {
    let total = t.shape()[0];
    if let Some(&bad) = frames.iter().find(|&&f| f >= total) {
        return Err(Error::Config(format!(
            "frame {bad} outside backbone features with {total} frames"
        )));
    }
    let stride: usize = t.shape()[1..].iter().product();
    let mut shape = t.shape().to_vec();
    shape[0] = frames.len();
    let values = frames
        .iter()
        .flat_map(|&f| t.values()[f * stride..(f + 1) * stride].iter().copied())
        .collect();
    Ok(Tensor::new(shape, values)?)
}

struct QueryModel {
    weights: ModelWeights,
    levels: Vec<LevelSpec>,
    backbone: Option<TensorMap>,
}

fn load_query_model(config: &PipelineConfig) -> Result<QueryModel> {
    let dims = config.model.dims();
    let weights = match &config.paths.weights {
        Some(p) => ModelWeights::from_tensor_map(&load_tensor_file(p)?, dims.heads)
            .map_err(|e| Error::data(p, "", e))?,
        None => ModelWeights::seeded(&dims, config.seed)?,
    };
    if weights.levels.len() != dims.levels.len()
        || weights
            .levels
            .iter()
            .zip(&dims.levels)
            .any(|(w, l)| w.traj.shape()[1] != l.channels)
    {
        return Err(Error::Config(format!(
            "model.levels {:?} do not match the weight levels",
            dims.levels
        )));
    }
    let backbone = config
        .paths
        .backbone
        .as_deref()
        .map(load_tensor_file)
        .transpose()?;
    Ok(QueryModel {
        weights,
        levels: dims.levels,
        backbone,
    })
}

fn instance_query(
    model: &QueryModel,
    video: &VideoMasks,
    seqs: &[&MaskSequence],
    frames: &[usize],
    num_frames: usize,
    config: &PipelineConfig,
) -> Result<Tensor> {
    let mut instances = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let feats = match &model.backbone {
            Some(map) => {
                let levels = (0..model.levels.len())
                    .map(|j| {
                        let name = format!("{}/{}/{j}", video.video, seq.object_id());
                        let t = map.get(&name).ok_or_else(|| {
                            Error::data(
                                config.paths.backbone.as_deref().unwrap_or(Path::new("")),
                                seq.object_id(),
                                format!("missing backbone tensor {name:?}"),
                            )
                        })?;
                        select_frames(t, frames)
                    })
                    .collect::<Result<Vec<_>>>()?;
                FeatureMap { levels }
            }
            None => {
                let sampled = MaskSequence::from_frames(
                    seq.object_id(),
                    seq.height(),
                    seq.width(),
                    frames
                        .iter()
                        .enumerate()
                        .filter_map(|(k, &t)| seq.get(t).map(|m| (k, m.clone()))),
                )?;
                encode_instance(&sampled, frames.len(), &model.levels)?
            }
        };
        let traj_all = positional_features(seq, num_frames);
        let traj: Vec<_> = frames.iter().map(|&t| traj_all[t]).collect();
        let traj_w: Vec<Tensor> = model
            .weights
            .levels
            .iter()
            .map(|l| l.traj.clone())
            .collect();
        let proj_w: Vec<Tensor> = model
            .weights
            .levels
            .iter()
            .map(|l| l.proj.clone())
            .collect();
        let injected = inject_trajectory(&feats, &traj, &traj_w)
            .map_err(|e| Error::data(Path::new(&video.video), seq.object_id(), e))?;
        instances.push(instance_tokens(&injected, &proj_w)?);
    }
    let seed = derive_seed(config.seed, &[&video.video, "queries"]);
    Ok(aggregate_queries(
        &instances,
        &model.weights.block,
        config.model.queries,
        seed,
    )?)
}

/// Writes `<video>.features.json` with per-object positional features over
/// all frames, or over the configured frame sample. With `query_init` the
/// file also carries the query aggregated from all objects in id order.
pub fn run_features(config: &PipelineConfig, query_init: bool) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let pred_path = config.require(&config.paths.predictions, "predictions")?;
    let out = config.require(&config.paths.out, "out")?;
    let videos = load_mask_inputs(pred_path)?;
    let model = if query_init {
        Some(load_query_model(config)?)
    } else {
        None
    };
    let params = serde_json::json!({ "window_start": config.sampling.window_start });
    let sampler = sampler_registry().build(&config.sampling.mode, &params)?;

    let files = in_pool(config.jobs, || {
        videos
            .par_iter()
            .map(|(path, video)| -> Result<FeatureFile> {
                let seqs = sorted_sequences(video);
                let num_frames = seqs.iter().map(|s| s.frame_span()).max().unwrap_or(0);
                let frames = match config.sampling.frames {
                    Some(n) => sampler
                        .sample(
                            num_frames,
                            n,
                            derive_seed(config.seed, &[&video.video, "frames"]),
                        )
                        .map_err(|e| Error::data(path, "", e))?,
                    None => (0..num_frames).collect(),
                };
                let objects = seqs
                    .iter()
                    .map(|seq| {
                        let all = positional_features(seq, num_frames);
                        ObjectFeatures {
                            object_id: seq.object_id().to_string(),
                            features: frames.iter().map(|&t| all[t].values).collect(),
                            valid: frames.iter().map(|&t| all[t].valid).collect(),
                        }
                    })
                    .collect();
                let query = match &model {
                    Some(m) if !frames.is_empty() => Some(instance_query(
                        m, video, &seqs, &frames, num_frames, config,
                    )?),
                    _ => None,
                };
                Ok(FeatureFile {
                    format_version: FORMAT_VERSION,
                    video: video.video.clone(),
                    frames,
                    objects,
                    query,
                })
            })
            .collect::<Vec<Result<_>>>()
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let outputs: Vec<(PathBuf, Vec<u8>)> = files
        .iter()
        .map(|f| {
            (
                out.join(format!("{}.features.json", file_stem(&f.video))),
                to_json_bytes(f),
            )
        })
        .collect();
    prepare_out_dir(out)?;
    write_all_atomic(&outputs)?;
    Ok(outputs.into_iter().map(|(p, _)| p).collect())
}
