//! Language-conditioned scoring of candidate instances.
//!
//! Each candidate's tokens attend to the language tokens (residual
//! cross-attention, no normalization), are mean-pooled and mapped to one
//! logit. A [`SelectionRule`] turns the logits into scores and a nonempty
//! selection.

use std::fmt::Debug;

use serde_json::Value;

use super::attention::{attention, AttentionWeights};
use super::{NnError, Tensor};
use crate::registry::{param_f64, Registry};

/// Linear map from the pooled `C`-vector to a single logit.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    /// `C x 1`
    pub weight: Tensor,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub logits: Vec<f64>,
    pub scores: Vec<f64>,
    /// Selected candidate indices, ascending and never empty.
    pub selected: Vec<usize>,
}

pub trait SelectionRule: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    /// Scores in `[0, 1]` and the ascending, nonempty selected index set.
    fn select(&self, logits: &[f64]) -> (Vec<f64>, Vec<usize>);
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Independent per-candidate sigmoid; every candidate at or above the
/// threshold is selected, falling back to the best one.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdRule {
    pub threshold: f64,
}

impl Default for ThresholdRule {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

impl SelectionRule for ThresholdRule {
    fn name(&self) -> &'static str {
        "threshold"
    }

    fn select(&self, logits: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let scores: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
        let mut selected: Vec<usize> = (0..scores.len())
            .filter(|&i| scores[i] >= self.threshold)
            .collect();
        if selected.is_empty() && !scores.is_empty() {
            selected.push(argmax(&scores));
        }
        (scores, selected)
    }
}

/// Softmax over the candidates; exactly one candidate is selected.
#[derive(Debug, Clone, Copy, Default)]
pub struct OneHotRule;

impl SelectionRule for OneHotRule {
    fn name(&self) -> &'static str {
        "one_hot"
    }

    fn select(&self, logits: &[f64]) -> (Vec<f64>, Vec<usize>) {
        if logits.is_empty() {
            return (Vec::new(), Vec::new());
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        let scores: Vec<f64> = exp.iter().map(|e| e / sum).collect();
        let best = argmax(&scores);
        (scores, vec![best])
    }
}

/// Registered rules: `threshold` (parameter `threshold`, default 0.5) and `one_hot`.
pub fn selection_registry() -> Registry<dyn SelectionRule> {
    let mut reg: Registry<dyn SelectionRule> = Registry::new("selection rule");
    reg.register(
        "threshold",
        "sigmoid per candidate, keep scores >= threshold",
        |p: &Value| {
            let threshold = param_f64(p, "threshold")?.unwrap_or(0.5);
            Ok(Box::new(ThresholdRule { threshold }))
        },
    );
    reg.register(
        "one_hot",
        "softmax across candidates, keep the argmax",
        |_| Ok(Box::new(OneHotRule)),
    );
    reg
}

pub fn score_candidates(
    candidates: &[Tensor],
    language: &Tensor,
    cross: &AttentionWeights,
    heads: usize,
    classifier: &Classifier,
) -> Result<Retrieval, NnError> {
    score_candidates_with(
        candidates,
        language,
        cross,
        heads,
        classifier,
        &ThresholdRule::default(),
    )
}

pub fn score_candidates_with(
    candidates: &[Tensor],
    language: &Tensor,
    cross: &AttentionWeights,
    heads: usize,
    classifier: &Classifier,
    rule: &dyn SelectionRule,
) -> Result<Retrieval, NnError> {
    if candidates.is_empty() {
        return Err(NnError::shape("score_candidates", "no candidates"));
    }
    let (_, c) = language.expect_matrix("score_candidates")?;
    if classifier.weight.matrix_dims() != Some((c, 1)) {
        return Err(NnError::shape(
            "score_candidates",
            format!("classifier {:?} for width {c}", classifier.weight.shape()),
        ));
    }
    let mut logits = Vec::with_capacity(candidates.len());
    for tokens in candidates {
        let (rows, _) = tokens.expect_matrix("score_candidates")?;
        if rows == 0 {
            return Err(NnError::shape(
                "score_candidates",
                "candidate without tokens",
            ));
        }
        let (readout, _) = attention(tokens, language, cross, heads)?;
        let fused = tokens.add(&readout)?;
        let pooled: Vec<f64> = (0..c)
            .map(|j| (0..rows).map(|r| fused.at(r, j)).sum::<f64>() / rows as f64)
            .collect();
        let logit = pooled
            .iter()
            .zip(classifier.weight.values())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + classifier.bias;
        if !logit.is_finite() {
            return Err(NnError::NonFinite {
                sublayer: "retrieval_head".into(),
            });
        }
        logits.push(logit);
    }
    let (scores, selected) = rule.select(&logits);
    Ok(Retrieval {
        logits,
        scores,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn scalar(v: f64) -> Tensor {
        Tensor::filled(&[1, 1], v)
    }

    fn unit_cross(wv: f64) -> AttentionWeights {
        AttentionWeights {
            wq: scalar(1.0),
            wk: scalar(1.0),
            wv: scalar(wv),
            wo: scalar(1.0),
        }
    }

    fn unit_classifier() -> Classifier {
        Classifier {
            weight: scalar(1.0),
            bias: 0.0,
        }
    }

    #[test]
    fn single_candidate_always_selected() {
        let lang = Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let clf = Classifier {
            weight: scalar(1.0),
            bias: -100.0,
        };
        let r = score_candidates(&[scalar(0.3)], &lang, &unit_cross(1.0), 1, &clf).unwrap();
        assert_eq!(r.selected, vec![0]);
        assert!(r.scores[0] < 0.5);
    }

    #[test]
    fn identical_candidates_tie_to_first() {
        let lang = Tensor::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let cand = Tensor::from_rows(&[vec![-0.5], vec![-2.0]]).unwrap();
        let r = score_candidates(
            &[cand.clone(), cand.clone(), cand],
            &lang,
            &unit_cross(1.0),
            1,
            &unit_classifier(),
        )
        .unwrap();
        assert!(r.scores.windows(2).all(|w| w[0] == w[1]));
        assert!(r.scores[0] < 0.5);
        assert_eq!(r.selected, vec![0]);
    }

    #[test]
    fn hand_set_scores() {
        // value projection 0: the attention read-out vanishes, logits are the tokens
        let a = (0.7f64 / 0.3).ln();
        let lang = Tensor::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let r = score_candidates(
            &[scalar(a), scalar(-a)],
            &lang,
            &unit_cross(0.0),
            1,
            &unit_classifier(),
        )
        .unwrap();
        assert!(
            (r.scores[0] - 0.7).abs() < 1e-12 && (r.scores[1] - 0.3).abs() < 1e-12,
            "{:?}",
            r.scores
        );
        assert_eq!(r.selected, vec![0]);
    }

    #[test]
    fn hand_evaluated_attention() {
        // lang = [1, -1], unit projections: read-out = tanh(q), logit = q + tanh(q)
        let lang = Tensor::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let r = score_candidates(
            &[scalar(0.5), scalar(-2.0)],
            &lang,
            &unit_cross(1.0),
            1,
            &unit_classifier(),
        )
        .unwrap();
        assert!((r.logits[0] - (0.5 + 0.5f64.tanh())).abs() < 1e-12);
        assert!((r.logits[1] - (-2.0 + (-2.0f64).tanh())).abs() < 1e-12);
        assert_eq!(r.selected, vec![0]);
    }

    #[test]
    fn one_hot_rule() {
        let (scores, sel) = OneHotRule.select(&[0.0, 2.0, 2.0]);
        assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(sel, vec![1]);
        let reg = selection_registry();
        let rule = reg.build("threshold", &json!({"threshold": 0.9})).unwrap();
        assert_eq!(rule.select(&[3.0, 2.0]).1, vec![0]);
        assert_eq!(reg.build("one_hot", &json!({})).unwrap().name(), "one_hot");
    }

    #[test]
    fn shape_errors() {
        let lang = Tensor::zeros(&[2, 1]);
        assert!(score_candidates(&[], &lang, &unit_cross(1.0), 1, &unit_classifier()).is_err());
        assert!(score_candidates(
            &[Tensor::zeros(&[1, 2])],
            &lang,
            &unit_cross(1.0),
            1,
            &unit_classifier()
        )
        .is_err());
    }
}
