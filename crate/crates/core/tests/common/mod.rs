//! Independent oracles and generators shared by the integration tests.
//! Nothing here calls into the library's algorithms; masks are plain
//! nested vectors and the attention reference works on `Vec<Vec<f64>>`.

#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rvosfuse::nn::{AttentionWeights, BlockWeights, FeedForward, LayerNorm, Tensor};
use rvosfuse::{BinaryMask, MaskSequence, RleMask};

pub type Grid = Vec<Vec<bool>>;
pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_mask(g: &Grid) -> BinaryMask {
    BinaryMask::from_fn(g.len(), g[0].len(), |r, c| g[r][c]).unwrap()
}

pub fn from_mask(m: &BinaryMask) -> Grid {
    (0..m.height())
        .map(|r| (0..m.width()).map(|c| m.get(r, c)).collect())
        .collect()
}

/// Random mask mixing blobs, noise and occasional empty or full frames.
pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Grid {
    let mut g = vec![vec![false; w]; h];
    match rng.random_range(0..10) {
        0 => return g,
        1 => return vec![vec![true; w]; h],
        2 | 3 => {
            let p: f64 = rng.random_range(0.05..0.95);
            for row in g.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.random_bool(p);
                }
            }
        }
        _ => {
            for _ in 0..rng.random_range(1..4) {
                let (r0, c0) = (rng.random_range(0..h), rng.random_range(0..w));
                let (r1, c1) = (rng.random_range(r0..h) + 1, rng.random_range(c0..w) + 1);
                for row in g.iter_mut().take(r1).skip(r0) {
                    for v in row.iter_mut().take(c1).skip(c0) {
                        *v = true;
                    }
                }
            }
            for _ in 0..rng.random_range(0..5) {
                let (r, c) = (rng.random_range(0..h), rng.random_range(0..w));
                g[r][c] = !g[r][c];
            }
        }
    }
    g
}

pub fn random_dims(rng: &mut ChaCha8Rng, max: usize) -> (usize, usize) {
    (rng.random_range(1..=max), rng.random_range(1..=max))
}

pub fn popcount(g: &Grid) -> u64 {
    g.iter().flatten().filter(|v| **v).count() as u64
}

pub fn dense_iou(a: &Grid, b: &Grid) -> f64 {
    let mut inter = 0u64;
    let mut union = 0u64;
    for (ra, rb) in a.iter().zip(b) {
        for (&x, &y) in ra.iter().zip(rb) {
            inter += u64::from(x && y);
            union += u64::from(x || y);
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn dense_boundary(g: &Grid) -> Grid {
    let (h, w) = (g.len() as isize, g[0].len() as isize);
    let at = |r: isize, c: isize| r >= 0 && c >= 0 && r < h && c < w && g[r as usize][c as usize];
    (0..h)
        .map(|r| {
            (0..w)
                .map(|c| {
                    at(r, c)
                        && [(-1, 0), (1, 0), (0, -1), (0, 1)]
                            .iter()
                            .any(|(dr, dc)| !at(r + dr, c + dc))
                })
                .collect()
        })
        .collect()
}

pub fn dense_dilate(g: &Grid, radius: usize) -> Grid {
    let (h, w) = (g.len(), g[0].len());
    let r = radius as isize;
    (0..h)
        .map(|y| {
            (0..w)
                .map(|x| {
                    (-r..=r).any(|dy| {
                        (-r..=r).any(|dx| {
                            let (yy, xx) = (y as isize + dy, x as isize + dx);
                            yy >= 0
                                && xx >= 0
                                && (yy as usize) < h
                                && (xx as usize) < w
                                && g[yy as usize][xx as usize]
                        })
                    })
                })
                .collect()
        })
        .collect()
}

pub fn dense_radius(h: usize, w: usize) -> usize {
    (0.008 * ((h * h + w * w) as f64).sqrt()).ceil() as usize
}

pub fn dense_f(pred: &Grid, gt: &Grid) -> f64 {
    let radius = dense_radius(gt.len(), gt[0].len());
    let (bp, bg) = (dense_boundary(pred), dense_boundary(gt));
    let (np, ng) = (popcount(&bp), popcount(&bg));
    if np == 0 && ng == 0 {
        return 1.0;
    }
    if np == 0 || ng == 0 {
        return 0.0;
    }
    let (dp, dg) = (dense_dilate(&bp, radius), dense_dilate(&bg, radius));
    let hits = |a: &Grid, b: &Grid| -> u64 {
        a.iter()
            .zip(b)
            .flat_map(|(x, y)| x.iter().zip(y))
            .filter(|(p, q)| **p && **q)
            .count() as u64
    };
    let precision = hits(&bp, &dg) as f64 / np as f64;
    let recall = hits(&bg, &dp) as f64 / ng as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn rect_grid(
    h: usize,
    w: usize,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> Grid {
    (0..h)
        .map(|r| {
            (0..w)
                .map(|c| rows.contains(&r) && cols.contains(&c))
                .collect()
        })
        .collect()
}

pub fn grid_union(a: &Grid, b: &Grid) -> Grid {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| *p || *q).collect())
        .collect()
}

pub fn sequence(id: &str, frames: &[(usize, Grid)]) -> MaskSequence {
    let (h, w) = (frames[0].1.len(), frames[0].1[0].len());
    MaskSequence::from_frames(
        id,
        h,
        w,
        frames
            .iter()
            .map(|(t, g)| (*t, rvosfuse::rle_encode(&to_mask(g)))),
    )
    .unwrap()
}

pub fn frame_grid(seq: &MaskSequence, t: usize) -> Grid {
    from_mask(&rvosfuse::rle_decode(&seq.mask_at(t)))
}

pub fn empty_rle(h: usize, w: usize) -> RleMask {
    RleMask::empty(h, w).unwrap()
}

// Dense attention reference.

pub fn mat(t: &Tensor) -> Mat {
    let (r, c) = t.matrix_dims().unwrap();
    (0..r)
        .map(|i| (0..c).map(|j| t.values()[i * c + j]).collect())
        .collect()
}

pub fn tensor(m: &Mat) -> Tensor {
    Tensor::from_rows(m).unwrap()
}

pub fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    let mut s = 0.0;
                    for k in 0..inner {
                        s += row[k] * b[k][j];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn norm_rows(x: &Mat, gamma: &[f64], beta: &[f64]) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(c, v)| {
                    let z = if var > 0.0 {
                        (v - mean) / var.sqrt()
                    } else {
                        0.0
                    };
                    z * gamma[c] + beta[c]
                })
                .collect()
        })
        .collect()
}

pub struct RefAttention {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
}

pub struct RefNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub struct RefBlock {
    pub heads: usize,
    pub cross: RefAttention,
    pub cross_norm: RefNorm,
    pub self_layers: Vec<(RefAttention, RefNorm)>,
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub ffn_norm: RefNorm,
}

/// Multi-head attention written out index by index.
pub fn ref_attention(q_in: &Mat, kv_in: &Mat, w: &RefAttention, heads: usize) -> Mat {
    let q = matmul(q_in, &w.wq);
    let k = matmul(kv_in, &w.wk);
    let v = matmul(kv_in, &w.wv);
    let c = w.wq[0].len();
    let d = c / heads;
    let mut ctx = vec![vec![0.0; c]; q.len()];
    for h in 0..heads {
        for i in 0..q.len() {
            let scores: Vec<f64> = (0..k.len())
                .map(|j| {
                    (0..d)
                        .map(|e| q[i][h * d + e] * k[j][h * d + e])
                        .sum::<f64>()
                        / (d as f64).sqrt()
                })
                .collect();
            let p = softmax(&scores);
            for e in 0..d {
                ctx[i][h * d + e] = (0..k.len()).map(|j| p[j] * v[j][h * d + e]).sum();
            }
        }
    }
    matmul(&ctx, &w.wo)
}

pub fn ref_block(query: &Mat, tokens: &Mat, b: &RefBlock) -> Mat {
    let mut x = norm_rows(
        &add(query, &ref_attention(query, tokens, &b.cross, b.heads)),
        &b.cross_norm.gamma,
        &b.cross_norm.beta,
    );
    for (w, n) in &b.self_layers {
        let s = ref_attention(&x, &x, w, b.heads);
        x = norm_rows(&add(&x, &s), &n.gamma, &n.beta);
    }
    let hidden: Mat = matmul(&x, &b.w1)
        .into_iter()
        .map(|row| {
            row.iter()
                .zip(&b.b1)
                .map(|(v, bias)| (v + bias).max(0.0))
                .collect()
        })
        .collect();
    let f: Mat = matmul(&hidden, &b.w2)
        .into_iter()
        .map(|row| row.iter().zip(&b.b2).map(|(v, bias)| v + bias).collect())
        .collect();
    norm_rows(&add(&x, &f), &b.ffn_norm.gamma, &b.ffn_norm.beta)
}

pub fn ref_fold(q0: &Mat, instances: &[Mat], b: &RefBlock) -> Mat {
    instances
        .iter()
        .fold(q0.clone(), |q, t| ref_block(&q, t, b))
}

/// Random block in both representations, with non-trivial norms and biases.
pub fn random_block(
    rng: &mut ChaCha8Rng,
    c: usize,
    heads: usize,
    layers: usize,
    ffn: usize,
) -> (RefBlock, BlockWeights) {
    let attn = |rng: &mut ChaCha8Rng| RefAttention {
        wq: random_mat(rng, c, c, 1.0),
        wk: random_mat(rng, c, c, 1.0),
        wv: random_mat(rng, c, c, 1.0),
        wo: random_mat(rng, c, c, 1.0),
    };
    let norm = |rng: &mut ChaCha8Rng| RefNorm {
        gamma: (0..c).map(|_| rng.random_range(0.5..1.5)).collect(),
        beta: (0..c).map(|_| rng.random_range(-0.5..0.5)).collect(),
    };
    let cross = attn(rng);
    let cross_norm = norm(rng);
    let self_layers: Vec<_> = (0..layers).map(|_| (attn(rng), norm(rng))).collect();
    let w1 = random_mat(rng, c, ffn, 1.0);
    let b1: Vec<f64> = (0..ffn).map(|_| rng.random_range(-0.5..0.5)).collect();
    let w2 = random_mat(rng, ffn, c, 1.0);
    let b2: Vec<f64> = (0..c).map(|_| rng.random_range(-0.5..0.5)).collect();
    let ffn_norm = norm(rng);
    let r = RefBlock {
        heads,
        cross,
        cross_norm,
        self_layers,
        w1,
        b1,
        w2,
        b2,
        ffn_norm,
    };
    let aw = |a: &RefAttention| AttentionWeights {
        wq: tensor(&a.wq),
        wk: tensor(&a.wk),
        wv: tensor(&a.wv),
        wo: tensor(&a.wo),
    };
    let ln = |n: &RefNorm| LayerNorm {
        gamma: Tensor::new(vec![c], n.gamma.clone()).unwrap(),
        beta: Tensor::new(vec![c], n.beta.clone()).unwrap(),
        eps: 0.0,
    };
    let weights = BlockWeights {
        heads,
        cross: aw(&r.cross),
        cross_norm: ln(&r.cross_norm),
        self_layers: r.self_layers.iter().map(|(a, n)| (aw(a), ln(n))).collect(),
        ffn: FeedForward {
            w1: tensor(&r.w1),
            b1: Tensor::new(vec![ffn], r.b1.clone()).unwrap(),
            w2: tensor(&r.w2),
            b2: Tensor::new(vec![c], r.b2.clone()).unwrap(),
        },
        ffn_norm: ln(&r.ffn_norm),
    };
    (r, weights)
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

// Mask files.

pub fn rle_counts(g: &Grid) -> Vec<u32> {
    let (h, w) = (g.len(), g[0].len());
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for c in 0..w {
        for row in g.iter().take(h) {
            if row[c] != current {
                counts.push(run);
                run = 0;
                current = row[c];
            }
            run += 1;
        }
    }
    counts.push(run);
    counts
}

/// Mask-file JSON written by hand, independent of the library's writer.
pub fn mask_file_json(
    video: &str,
    h: usize,
    w: usize,
    objects: &[(&str, Vec<(usize, Grid)>)],
) -> String {
    let objs: Vec<serde_json::Value> = objects
        .iter()
        .map(|(id, frames)| {
            serde_json::json!({
                "id": id,
                "frames": frames.iter().map(|(t, g)| serde_json::json!({"t": t, "counts": rle_counts(g)})).collect::<Vec<_>>(),
            })
        })
        .collect();
    serde_json::json!({"format_version": 1, "video": video, "height": h, "width": w, "objects": objs}).to_string()
}

/// Synthetic corpus of three videos with predictions, candidates and
/// ground truth, written into `dir/{pred,cand,gt}`.
pub fn write_corpus(dir: &Path, seed: u64) {
    let mut rng = rng(seed);
    for sub in ["pred", "cand", "gt"] {
        std::fs::create_dir_all(dir.join(sub)).unwrap();
    }
    for (v, (h, w, frames)) in [(12usize, 16usize, 5usize), (20, 20, 6), (9, 14, 4)]
        .into_iter()
        .enumerate()
    {
        let video = format!("video{v}");
        let mut cands: Vec<(String, Vec<(usize, Grid)>)> = Vec::new();
        for k in 0..3 {
            let (r0, c0) = (rng.random_range(0..h / 2), rng.random_range(0..w / 2));
            let (dh, dw) = (rng.random_range(2..h / 2), rng.random_range(2..w / 2));
            let frames: Vec<(usize, Grid)> = (0..frames)
                .map(|t| {
                    let shift = t % 2;
                    (t, rect_grid(h, w, r0 + shift..r0 + shift + dh, c0..c0 + dw))
                })
                .collect();
            cands.push((format!("c{k}"), frames));
        }
        let noisy = |rng: &mut ChaCha8Rng, g: &Grid| -> Grid {
            g.iter()
                .map(|row| {
                    row.iter()
                        .map(|&v| if rng.random_bool(0.05) { !v } else { v })
                        .collect()
                })
                .collect()
        };
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        for (e, (_, src)) in cands.iter().enumerate().take(2) {
            preds.push((
                format!("expr{e}"),
                src.iter()
                    .map(|(t, g)| (*t, noisy(&mut rng, g)))
                    .collect::<Vec<_>>(),
            ));
            gts.push((format!("expr{e}"), src.clone()));
        }
        let write = |sub: &str, objs: &[(String, Vec<(usize, Grid)>)]| {
            let borrowed: Vec<(&str, Vec<(usize, Grid)>)> = objs
                .iter()
                .map(|(id, f)| (id.as_str(), f.clone()))
                .collect();
            std::fs::write(
                dir.join(sub).join(format!("{video}.json")),
                mask_file_json(&video, h, w, &borrowed),
            )
            .unwrap();
        };
        write("pred", &preds);
        write("cand", &cands);
        write("gt", &gts);
    }
}

/// Every file under `dir`, recursively, as sorted (relative path, bytes).
pub fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
