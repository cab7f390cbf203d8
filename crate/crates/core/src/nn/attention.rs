use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{NnError, Tensor};

/// Standard deviation of the seeded initial query set.
pub const QUERY_INIT_STD: f64 = 0.02;

/// Projections of one attention layer, each `C x C`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
}

/// Per-row normalization followed by an elementwise scale and shift.
///
/// With `eps = 0` a constant row normalizes to zeros instead of dividing by zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            eps: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    /// `C x C_ff`
    pub w1: Tensor,
    pub b1: Tensor,
    /// `C_ff x C`
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Cross-attention, `L_s` self-attention layers and a feed-forward layer,
/// each followed by residual add and layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub heads: usize,
    pub cross: AttentionWeights,
    pub cross_norm: LayerNorm,
    pub self_layers: Vec<(AttentionWeights, LayerNorm)>,
    pub ffn: FeedForward,
    pub ffn_norm: LayerNorm,
}

impl BlockWeights {
    pub fn channels(&self) -> usize {
        self.cross.wq.shape()[0]
    }
}

/// Intermediate values of one block evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrace {
    /// Cross-attention probabilities per head, each `N x T`.
    pub cross_probs: Vec<Tensor>,
    /// Cross-attention read-out after the output projection, before the residual.
    pub cross_readout: Tensor,
}

/// Numerically stable softmax over each row, in place.
pub fn softmax_rows(t: &mut Tensor) {
    let cols = *t.shape().last().expect("softmax on a scalar");
    for row in t.values_mut().chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

pub fn layer_norm(x: &Tensor, norm: &LayerNorm) -> Result<Tensor, NnError> {
    let (rows, cols) = x.expect_matrix("layer_norm")?;
    if norm.gamma.values().len() != cols || norm.beta.values().len() != cols {
        return Err(NnError::shape(
            "layer_norm",
            format!("scale/shift for {cols} channels"),
        ));
    }
    let mut out = x.clone();
    for r in 0..rows {
        let row = out.row_mut(r);
        let n = cols as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let denom = (var + norm.eps).sqrt();
        for (c, v) in row.iter_mut().enumerate() {
            let z = if denom > 0.0 {
                (*v - mean) / denom
            } else {
                0.0
            };
            *v = z * norm.gamma.values()[c] + norm.beta.values()[c];
        }
    }
    Ok(out)
}

/// Scaled dot-product attention of `query_in` (`N x C`) over `kv_in`
/// (`T x C`), split into `heads` heads of width `C / heads`. Returns the
/// projected read-out (`N x C`) and the per-head probabilities.
pub fn attention(
    query_in: &Tensor,
    kv_in: &Tensor,
    w: &AttentionWeights,
    heads: usize,
) -> Result<(Tensor, Vec<Tensor>), NnError> {
    let (n, c) = query_in.expect_matrix("attention")?;
    let (t, c2) = kv_in.expect_matrix("attention")?;
    if c != c2 {
        return Err(NnError::shape(
            "attention",
            format!("query width {c} vs key/value width {c2}"),
        ));
    }
    if t == 0 {
        return Err(NnError::shape("attention", "no key/value tokens"));
    }
    if heads == 0 || c % heads != 0 {
        return Err(NnError::Config(format!(
            "{heads} heads do not divide {c} channels"
        )));
    }
    let q = query_in.matmul(&w.wq)?;
    let k = kv_in.matmul(&w.wk)?;
    let v = kv_in.matmul(&w.wv)?;
    let d = c / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let mut context = Tensor::zeros(&[n, c]);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = h * d..(h + 1) * d;
        let mut p = Tensor::from_fn(n, t, |i, j| {
            let qi = &q.row(i)[cols.clone()];
            let kj = &k.row(j)[cols.clone()];
            qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale
        });
        softmax_rows(&mut p);
        for i in 0..n {
            let pi = p.row(i).to_vec();
            let ctx = &mut context.row_mut(i)[cols.clone()];
            for (j, &pij) in pi.iter().enumerate() {
                for (out, &vv) in ctx.iter_mut().zip(&v.row(j)[cols.clone()]) {
                    *out += pij * vv;
                }
            }
        }
        probs.push(p);
    }
    Ok((context.matmul(&w.wo)?, probs))
}

fn finite(t: Tensor, sublayer: impl Into<String>) -> Result<Tensor, NnError> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(NnError::NonFinite {
            sublayer: sublayer.into(),
        })
    }
}

pub fn attention_block(
    query: &Tensor,
    tokens: &Tensor,
    weights: &BlockWeights,
) -> Result<Tensor, NnError> {
    attention_block_traced(query, tokens, weights).map(|(q, _)| q)
}

/// [`attention_block`], also returning the cross-attention intermediates.
pub fn attention_block_traced(
    query: &Tensor,
    tokens: &Tensor,
    weights: &BlockWeights,
) -> Result<(Tensor, BlockTrace), NnError> {
    let (readout, cross_probs) = attention(query, tokens, &weights.cross, weights.heads)?;
    let readout = finite(readout, "cross_attention")?;
    let mut x = finite(
        layer_norm(&query.add(&readout)?, &weights.cross_norm)?,
        "cross_attention_norm",
    )?;

    for (i, (w, norm)) in weights.self_layers.iter().enumerate() {
        let (s, _) = attention(&x, &x, w, weights.heads)?;
        let s = finite(s, format!("self_attention[{i}]"))?;
        x = finite(
            layer_norm(&x.add(&s)?, norm)?,
            format!("self_attention_norm[{i}]"),
        )?;
    }

    let mut hidden = x.matmul(&weights.ffn.w1)?;
    hidden.add_row_bias(&weights.ffn.b1)?;
    hidden.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    let mut f = hidden.matmul(&weights.ffn.w2)?;
    f.add_row_bias(&weights.ffn.b2)?;
    let f = finite(f, "ffn")?;
    let x = finite(layer_norm(&x.add(&f)?, &weights.ffn_norm)?, "ffn_norm")?;

    Ok((
        x,
        BlockTrace {
            cross_probs,
            cross_readout: readout,
        },
    ))
}

/// Seeded `N x C` query set drawn from `normal(0, QUERY_INIT_STD^2)`.
pub fn initial_queries(num_queries: usize, channels: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, QUERY_INIT_STD).expect("valid std");
    Tensor::from_fn(num_queries, channels, |_, _| normal.sample(&mut rng))
}

/// Folds the block over the instances in order, starting from the seeded
/// initial queries: `Q_i = block(Q_{i-1}, instances[i-1])`.
pub fn aggregate_queries(
    instances: &[Tensor],
    weights: &BlockWeights,
    num_queries: usize,
    seed: u64,
) -> Result<Tensor, NnError> {
    if num_queries == 0 {
        return Err(NnError::Config("query count must be at least 1".into()));
    }
    let q0 = initial_queries(num_queries, weights.channels(), seed);
    instances
        .iter()
        .try_fold(q0, |q, tokens| attention_block(&q, tokens, weights))
}
