//! Confidence-aware drafting with the layer-skipped model.
//!
//! Drafting follows the top-1 path autoregressively, stops once the top-1
//! probability drops below `epsilon`, and expands every step with top-k
//! siblings whose count depends on that probability. The result is a
//! caterpillar tree: a spine of top-1 tokens with leaf siblings hanging off
//! each depth.

use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::sampling::{sample_index, SamplingParams, SessionRng};
use crate::transformer::{argmax, forward, softmax_row, top_k, AttentionMaskSpec, KvCache, LayerMask, Parent};

pub const DEFAULT_EPSILON: f64 = 0.3;
pub const DEFAULT_MAX_DRAFT: usize = 25;

/// Candidate count for a draft step with top-1 probability `p`.
///
/// Buckets are left-open: `(0, 0.5] -> 10`, `(0.5, 0.8] -> 5`,
/// `(0.8, 0.95] -> 3`, `(0.95, 1] -> 1`.
pub fn k_for_confidence(p: f64) -> Result<usize> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::OutOfRange(p));
    }
    Ok(if p <= 0.5 {
        10
    } else if p <= 0.8 {
        5
    } else if p <= 0.95 {
        3
    } else {
        1
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DraftStep {
    /// Spine token: the draft's argmax, or its sample in sampling mode.
    pub token: u32,
    /// Top-1 probability of the temperature-1 draft distribution.
    pub confidence: f64,
    /// Verification candidates, most probable first; `siblings[0] == token`.
    pub siblings: Vec<u32>,
    /// Distribution `token` was chosen from.
    pub draft_dist: Vec<f64>,
}

/// How spine tokens are chosen.
pub enum DraftMode<'a> {
    Greedy,
    /// Sample spine tokens from the processed draft distribution. No sibling
    /// expansion; verification is chain-only.
    Sample {
        params: SamplingParams,
        rng: &'a mut SessionRng,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DraftTree {
    pub steps: Vec<DraftStep>,
}

/// A draft tree flattened for one verification pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTree {
    pub tokens: Vec<u32>,
    /// `Parent::Root` for depth-1 nodes, otherwise the previous spine node.
    pub parents: Vec<Parent>,
    /// Node index of the spine token at each depth.
    pub spine_nodes: Vec<usize>,
    /// Depth of each node, starting at 1.
    pub depth: Vec<usize>,
}

impl LinearTree {
    pub fn mask(&self) -> AttentionMaskSpec {
        AttentionMaskSpec::Tree(self.parents.clone())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl DraftTree {
    pub fn spine_len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn spine(&self) -> Vec<u32> {
        self.steps.iter().map(|s| s.token).collect()
    }

    /// Total candidate count, `sum_j |siblings_j|`.
    pub fn linearized_len(&self) -> usize {
        self.steps.iter().map(|s| s.siblings.len()).sum()
    }

    /// Orders nodes depth by depth, spine token first, then its siblings.
    pub fn linearize(&self) -> Result<LinearTree> {
        if self.steps.is_empty() {
            return Err(Error::EmptyTree);
        }
        let mut out = LinearTree {
            tokens: Vec::with_capacity(self.linearized_len()),
            parents: Vec::new(),
            spine_nodes: Vec::new(),
            depth: Vec::new(),
        };
        let mut parent = Parent::Root;
        for (j, step) in self.steps.iter().enumerate() {
            let spine = out.tokens.len();
            out.spine_nodes.push(spine);
            for &tok in &step.siblings {
                out.tokens.push(tok);
                out.parents.push(parent);
                out.depth.push(j + 1);
            }
            parent = Parent::Node(spine);
        }
        Ok(out)
    }
}

/// Drafts up to `n_max` tokens continuing from `last_token`, whose KV is not
/// yet in `cache`. The cache is restored to its entry state before returning.
pub fn draft(
    bundle: &ModelBundle,
    cache: &mut KvCache,
    mask: &LayerMask,
    last_token: u32,
    epsilon: f64,
    n_max: usize,
    mut mode: DraftMode<'_>,
) -> Result<DraftTree> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::OutOfRange(epsilon));
    }
    if n_max == 0 {
        return Err(Error::OutOfRange(0.0));
    }
    let mark = cache.checkpoint();
    let result = draft_inner(bundle, cache, mask, last_token, epsilon, n_max, &mut mode);
    cache.rollback(mark)?;
    result
}

fn draft_inner(
    bundle: &ModelBundle,
    cache: &mut KvCache,
    mask: &LayerMask,
    last_token: u32,
    epsilon: f64,
    n_max: usize,
    mode: &mut DraftMode<'_>,
) -> Result<DraftTree> {
    let vocab = bundle.config.vocab_size;
    let mut tree = DraftTree::default();
    let mut input = last_token;
    for _ in 0..n_max {
        let logits = forward(bundle, cache, &[input], mask, &AttentionMaskSpec::Causal, false)?;
        let row = logits.row(0);
        let probs = softmax_row(row, 1.0)?;
        let top = argmax(row);
        let confidence = probs[top];
        let step = match mode {
            DraftMode::Greedy => {
                let k = k_for_confidence(confidence)?.min(vocab);
                DraftStep {
                    token: top as u32,
                    confidence,
                    siblings: top_k(row, k).into_iter().map(|i| i as u32).collect(),
                    draft_dist: probs,
                }
            }
            DraftMode::Sample { params, rng } => {
                let q = params.distribution(row)?;
                let token = sample_index(&q, rng.uniform()) as u32;
                DraftStep {
                    token,
                    confidence,
                    siblings: vec![token],
                    draft_dist: q,
                }
            }
        };
        input = step.token;
        tree.steps.push(step);
        if confidence < epsilon {
            break;
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets_are_left_open() {
        assert_eq!(k_for_confidence(0.3).unwrap(), 10);
        assert_eq!(k_for_confidence(0.5).unwrap(), 10);
        assert_eq!(k_for_confidence(0.5000001).unwrap(), 5);
        assert_eq!(k_for_confidence(0.8).unwrap(), 5);
        assert_eq!(k_for_confidence(0.95).unwrap(), 3);
        assert_eq!(k_for_confidence(0.96).unwrap(), 1);
        assert_eq!(k_for_confidence(1.0).unwrap(), 1);
        assert!(k_for_confidence(0.0).is_err());
        assert!(k_for_confidence(1.01).is_err());
        assert!(k_for_confidence(f64::NAN).is_err());
    }

    fn step(token: u32, siblings: &[u32]) -> DraftStep {
        DraftStep {
            token,
            confidence: 0.5,
            siblings: siblings.to_vec(),
            draft_dist: Vec::new(),
        }
    }

    #[test]
    fn linearize_two_steps() {
        let tree = DraftTree {
            steps: vec![step(4, &[4, 7, 9]), step(2, &[2])],
        };
        let lin = tree.linearize().unwrap();
        assert_eq!(lin.tokens, vec![4, 7, 9, 2]);
        assert_eq!(lin.parents, vec![Parent::Root, Parent::Root, Parent::Root, Parent::Node(0)]);
        assert_eq!(lin.spine_nodes, vec![0, 3]);
        assert_eq!(lin.depth, vec![1, 1, 1, 2]);
        assert_eq!(tree.linearized_len(), 4);
    }

    #[test]
    fn single_step_is_causal() {
        let tree = DraftTree {
            steps: vec![step(1, &[1])],
        };
        let lin = tree.linearize().unwrap();
        assert_eq!(lin.mask().parents(1), AttentionMaskSpec::Causal.parents(1));
    }

    #[test]
    fn empty_tree_rejected() {
        assert!(matches!(DraftTree::default().linearize(), Err(Error::EmptyTree)));
    }
}
