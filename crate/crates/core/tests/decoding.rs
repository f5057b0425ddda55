mod common;

use common::*;
use swift_core::draft::{draft, DraftMode, DraftStep, DraftTree};
use swift_core::model::Tensor;
use swift_core::sampling::{SamplingParams, SessionRng};
use swift_core::transformer::{argmax, forward, AttentionMaskSpec, LayerMask};
use swift_core::verify::{spec_sample_accept, verify_greedy, verify_sampling};

fn step(token: u32, siblings: &[u32]) -> DraftStep {
    DraftStep {
        token,
        confidence: 0.5,
        siblings: siblings.to_vec(),
        draft_dist: Vec::new(),
    }
}

fn target_argmax(bundle: &swift_core::model::ModelBundle, history: &[u32]) -> u32 {
    let mut cache = prefix_cache(bundle, &history[..history.len() - 1], 64);
    let logits = forward(bundle, &mut cache, &history[history.len() - 1..], &LayerMask::full(4), &AttentionMaskSpec::Causal, false)
        .unwrap();
    argmax(logits.row(0)) as u32
}

#[test]
fn uniform_logits_give_whole_vocabulary_as_candidates() {
    let mut bundle = tiny_model(2, 4, &[]);
    bundle.weights.lm_head = Tensor::zeros(bundle.weights.lm_head.shape.clone());
    let mut cache = prefix_cache(&bundle, &[1, 2], 16);
    let mask = LayerMask::from_skipped(4, [1]);

    let stopped = draft(&bundle, &mut cache, &mask, 3, 0.3, 8, DraftMode::Greedy).unwrap();
    assert_eq!(stopped.spine_len(), 1, "confidence 0.25 is below epsilon");
    assert_eq!(stopped.steps[0].confidence, 0.25);
    assert_eq!(stopped.steps[0].siblings, vec![0, 1, 2, 3]);

    let long = draft(&bundle, &mut cache, &mask, 3, 0.0, 5, DraftMode::Greedy).unwrap();
    assert_eq!(long.spine(), vec![0; 5]);
    assert_eq!(cache.len(), 2, "drafting leaves the cache as it found it");
}

#[test]
fn sibling_match_is_accepted_and_stops_the_walk() {
    let bundle = tiny_model(7, 32, &[]);
    let history = [5u32, 11, 2, 30];
    let want = target_argmax(&bundle, &history);
    let decoy = (want + 1) % 32;
    let tree = DraftTree {
        steps: vec![step(decoy, &[decoy, want]), step(want, &[want])],
    };
    let mut cache = prefix_cache(&bundle, &history[..3], 64);
    let out = verify_greedy(&bundle, &mut cache, history[3], &tree).unwrap();
    let mut extended = history.to_vec();
    extended.push(want);
    assert_eq!(out.accepted_tokens, vec![want, target_argmax(&bundle, &extended)]);
    assert_eq!(out.accepted_draft_count, 1);
    assert_eq!(cache, prefix_cache(&bundle, &extended, 64));
}

#[test]
fn full_mismatch_emits_the_correction_only() {
    let bundle = tiny_model(8, 32, &[]);
    let history = [1u32, 2, 3];
    let want = target_argmax(&bundle, &history);
    let others: Vec<u32> = (0..32).filter(|&t| t != want).take(3).collect();
    let tree = DraftTree {
        steps: vec![step(others[0], &others)],
    };
    let mut cache = prefix_cache(&bundle, &history[..2], 64);
    let out = verify_greedy(&bundle, &mut cache, 3, &tree).unwrap();
    assert_eq!(out.accepted_tokens, vec![want]);
    assert_eq!(out.accepted_draft_count, 0);
    assert_eq!(cache.committed_len(), 3);
}

#[test]
fn empty_tree_is_plain_decoding() {
    let bundle = tiny_model(3, 16, &[]);
    let mut cache = prefix_cache(&bundle, &[4, 5], 16);
    let out = verify_greedy(&bundle, &mut cache, 6, &DraftTree::default()).unwrap();
    assert_eq!(out.accepted_tokens, vec![target_argmax(&bundle, &[4, 5, 6])]);
}

#[test]
fn acceptance_draws_residual_only_on_rejection() {
    let p = [0.5, 0.5, 0.0];
    let q = [0.25, 0.25, 0.5];
    let mut calls = 0;
    let a = spec_sample_accept(&p, &q, 0, 0.99, || {
        calls += 1;
        0.0
    })
    .unwrap();
    assert!(a.accepted && calls == 0);
    let r = spec_sample_accept(&p, &q, 2, 0.0, || 0.75).unwrap();
    assert!(!r.accepted && r.residual_used);
    assert_eq!(r.token, 1);
}

#[test]
fn sampling_verify_is_replayable() {
    let bundle = tiny_model(4, 16, &[]);
    let params = SamplingParams {
        temperature: 0.8,
        top_p: 0.9,
    };
    let run = || {
        let mut rng = SessionRng::new(17, "s");
        let mut cache = prefix_cache(&bundle, &[1, 2, 3], 32);
        let mask = LayerMask::from_skipped(4, [2]);
        let tree = draft(&bundle, &mut cache, &mask, 4, 0.0, 4, DraftMode::Sample { params, rng: &mut rng }).unwrap();
        let out = verify_sampling(&bundle, &mut cache, 4, &tree, &params, &mut rng).unwrap();
        (out, rng.draws(), cache.committed_len())
    };
    let (a, draws, committed) = run();
    assert_eq!(run().0, a);
    assert_eq!(committed, 3 + a.accepted_tokens.len());
    assert!(draws >= 4 + 1 + a.accepted_draft_count as u64);
}
