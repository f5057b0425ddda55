//! Parallel verification of a draft by the full target model.
//!
//! Both modes run exactly one target forward, commit the accepted prefix plus
//! the position that produced the final token, and drop every other draft row.
//! The emitted sequence always ends with one token the target chose itself
//! (a correction, or a bonus after the last accepted draft).

use crate::draft::DraftTree;
use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::sampling::{check_distribution, sample_index, SamplingParams, SessionRng};
use crate::transformer::{argmax, forward, AttentionMaskSpec, KvCache, LayerMask, Parent};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOutcome {
    /// Accepted drafts followed by the target's own token.
    pub accepted_tokens: Vec<u32>,
    pub accepted_draft_count: usize,
    pub draft_spine_len: usize,
}

fn ensure_clean(cache: &KvCache) -> Result<()> {
    if cache.len() != cache.committed_len() {
        return Err(Error::InvalidCommit("verification needs a cache without tentative rows".into()));
    }
    Ok(())
}

/// Greedy verification over the full candidate tree.
///
/// Walking down from `pending` (the last emitted token, not yet in the
/// cache): the target's argmax at the current node is accepted if it is the
/// spine token (walk continues) or one of its siblings (walk stops, since the
/// deeper spine was conditioned on the spine token). Any other argmax ends the
/// walk as the correction token.
pub fn verify_greedy(bundle: &ModelBundle, cache: &mut KvCache, pending: u32, tree: &DraftTree) -> Result<VerifyOutcome> {
    ensure_clean(cache)?;
    let full = LayerMask::full(bundle.sublayers());
    let mut tokens = vec![pending];
    let mut parents = vec![Parent::Root];
    let mut spine_nodes = Vec::new();
    if !tree.is_empty() {
        let lin = tree.linearize()?;
        tokens.extend(&lin.tokens);
        parents.extend(lin.parents.iter().map(|p| match *p {
            Parent::Node(j) => Parent::Node(j + 1),
            _ => Parent::Node(0),
        }));
        spine_nodes = lin.spine_nodes.iter().map(|n| n + 1).collect();
    }
    let base = cache.len();
    let logits = forward(bundle, cache, &tokens, &full, &AttentionMaskSpec::Tree(parents), false)?;

    let mut node = 0;
    let mut path = vec![0];
    let mut accepted = Vec::new();
    for (step, &spine_node) in tree.steps.iter().zip(&spine_nodes) {
        let t = argmax(logits.row(node)) as u32;
        if t == step.token {
            accepted.push(t);
            node = spine_node;
            path.push(node);
            continue;
        }
        if let Some(offset) = step.siblings.iter().skip(1).position(|&s| s == t) {
            accepted.push(t);
            node = spine_node + 1 + offset;
            path.push(node);
        }
        break;
    }
    let accepted_draft_count = accepted.len();
    accepted.push(argmax(logits.row(node)) as u32);
    let slots: Vec<usize> = path.iter().map(|n| base + n).collect();
    cache.commit_path(&slots)?;
    Ok(VerifyOutcome {
        accepted_tokens: accepted,
        accepted_draft_count,
        draft_spine_len: tree.spine_len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Acceptance {
    pub accepted: bool,
    pub token: u32,
    pub residual_used: bool,
}

/// `min(1, target[t] / draft[t])`.
pub fn acceptance_probability(target: &[f64], draft: &[f64], token: u32) -> f64 {
    let t = token as usize;
    (target[t] / draft[t]).min(1.0)
}

/// `norm(max(0, target - draft))`, or `None` when it has no mass.
pub fn residual_distribution(target: &[f64], draft: &[f64]) -> Option<Vec<f64>> {
    let mut r: Vec<f64> = target.iter().zip(draft).map(|(p, q)| (p - q).max(0.0)).collect();
    let total: f64 = r.iter().sum();
    if total <= 0.0 {
        return None;
    }
    r.iter_mut().for_each(|v| *v /= total);
    Some(r)
}

/// Speculative-sampling acceptance of `token`, drawn from `draft`.
///
/// Accepts iff `u < min(1, target[t]/draft[t])`. On rejection, `residual_u`
/// is called once for an inverse-CDF draw from the residual distribution.
pub fn spec_sample_accept(
    target: &[f64],
    draft: &[f64],
    token: u32,
    u: f64,
    residual_u: impl FnOnce() -> f64,
) -> Result<Acceptance> {
    check_distribution(target)?;
    check_distribution(draft)?;
    if target.len() != draft.len() {
        return Err(Error::InvalidDistribution("target and draft sizes differ".into()));
    }
    if token as usize >= draft.len() || draft[token as usize] <= 0.0 {
        return Err(Error::InvalidDistribution(format!("draft gives token {token} no mass")));
    }
    if u < acceptance_probability(target, draft, token) {
        return Ok(Acceptance {
            accepted: true,
            token,
            residual_used: false,
        });
    }
    let residual = residual_distribution(target, draft).ok_or(Error::DegenerateResidual)?;
    Ok(Acceptance {
        accepted: false,
        token: sample_index(&residual, residual_u()) as u32,
        residual_used: true,
    })
}

/// Chain speculative sampling along the spine (siblings are ignored).
///
/// Draws, in order: one uniform per verified spine position, one more for
/// the residual on the first rejection, or one for the bonus token if every
/// draft is accepted.
pub fn verify_sampling(
    bundle: &ModelBundle,
    cache: &mut KvCache,
    pending: u32,
    tree: &DraftTree,
    params: &SamplingParams,
    rng: &mut SessionRng,
) -> Result<VerifyOutcome> {
    ensure_clean(cache)?;
    let full = LayerMask::full(bundle.sublayers());
    let mut tokens = vec![pending];
    tokens.extend(tree.spine());
    let base = cache.len();
    let logits = forward(bundle, cache, &tokens, &full, &AttentionMaskSpec::Causal, false)?;

    let mut accepted = Vec::new();
    let mut last = None;
    for (j, step) in tree.steps.iter().enumerate() {
        let p = params.distribution(logits.row(j))?;
        let u = rng.uniform();
        let outcome = spec_sample_accept(&p, &step.draft_dist, step.token, u, || rng.uniform())?;
        if !outcome.accepted {
            last = Some(outcome.token);
            break;
        }
        accepted.push(step.token);
    }
    let accepted_draft_count = accepted.len();
    let last = match last {
        Some(t) => t,
        None => {
            let p = params.distribution(logits.row(accepted_draft_count))?;
            sample_index(&p, rng.uniform()) as u32
        }
    };
    accepted.push(last);
    let slots: Vec<usize> = (0..=accepted_draft_count).map(|n| base + n).collect();
    cache.commit_path(&slots)?;
    Ok(VerifyOutcome {
        accepted_tokens: accepted,
        accepted_draft_count,
        draft_spine_len: tree.spine_len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_distributions_always_accept() {
        let p = [0.2, 0.3, 0.5];
        for u in [0.0, 0.5, 0.999_999] {
            let a = spec_sample_accept(&p, &p, 1, u, || panic!("no residual draw")).unwrap();
            assert!(a.accepted);
        }
    }

    #[test]
    fn zero_target_mass_forces_rejection() {
        let target = [1.0, 0.0];
        let draft = [0.5, 0.5];
        for u in [0.0, 0.3, 0.99] {
            let a = spec_sample_accept(&target, &draft, 1, u, || 0.7).unwrap();
            assert!(!a.accepted);
            assert!(a.residual_used);
            assert_eq!(a.token, 0);
        }
        assert_eq!(residual_distribution(&target, &draft).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            spec_sample_accept(&[0.5, 0.6], &[0.5, 0.5], 0, 0.1, || 0.0),
            Err(Error::InvalidDistribution(_))
        ));
        assert!(matches!(
            spec_sample_accept(&[0.5, 0.5], &[1.0, 0.0], 1, 0.1, || 0.0),
            Err(Error::InvalidDistribution(_))
        ));
    }

    #[test]
    fn degenerate_residual_detected() {
        // u >= 1 is outside the contract; it forces a rejection with p == q.
        let p = [0.5, 0.5];
        assert!(matches!(
            spec_sample_accept(&p, &p, 0, 1.0, || 0.0),
            Err(Error::DegenerateResidual)
        ));
    }
}
