//! Fixture builders and reference oracles shared by the integration suites.
#![allow(dead_code)]

use swift_core::draft::{DraftStep, DraftTree};
use swift_core::model::{make_gated_model, make_synthetic_model, ArchConfig, GatedModelSpec, ModelBundle};
use swift_core::optimizer::OptimizerConfig;
use swift_core::sampling::SessionRng;
use swift_core::session::{GenerationRequest, SwiftConfig};
use swift_core::transformer::{forward, AttentionMaskSpec, KvCache, LayerMask};

pub fn tiny_config(vocab: usize) -> ArchConfig {
    ArchConfig::new(2, 16, 2, 32, vocab, 128)
}

pub fn tiny_model(seed: u64, vocab: usize, planted: &[usize]) -> ModelBundle {
    make_synthetic_model(seed, tiny_config(vocab), planted).unwrap()
}

pub fn random_tokens(rng: &mut SessionRng, n: usize, vocab: usize) -> Vec<u32> {
    (0..n).map(|_| rng.below(vocab) as u32).collect()
}

pub fn random_mask(rng: &mut SessionRng, sublayers: usize) -> LayerMask {
    LayerMask::from_bits((0..sublayers).map(|_| rng.below(2) == 1).collect())
}

/// Committed prefix cache built by one causal forward.
pub fn prefix_cache(bundle: &ModelBundle, prefix: &[u32], capacity: usize) -> KvCache {
    let mut cache = KvCache::with_capacity(&bundle.config, capacity);
    if !prefix.is_empty() {
        let full = LayerMask::full(bundle.sublayers());
        forward(bundle, &mut cache, prefix, &full, &AttentionMaskSpec::Causal, true).unwrap();
    }
    cache
}

/// Logits of the last token of `prefix ++ path`, decoding one token at a time.
pub fn sequential_logits(bundle: &ModelBundle, prefix: &[u32], path: &[u32], mask: &LayerMask) -> Vec<f32> {
    let mut cache = prefix_cache(bundle, prefix, prefix.len() + path.len() + 1);
    let mut last = Vec::new();
    for &t in path {
        last = forward(bundle, &mut cache, &[t], mask, &AttentionMaskSpec::Causal, true)
            .unwrap()
            .row(0)
            .to_vec();
    }
    last
}

/// A random caterpillar tree with distinct siblings per depth.
pub fn random_tree(rng: &mut SessionRng, vocab: usize, max_depth: usize, max_siblings: usize) -> DraftTree {
    let depth = 1 + rng.below(max_depth);
    let steps = (0..depth)
        .map(|_| {
            let k = 1 + rng.below(max_siblings.min(vocab));
            let mut siblings = Vec::new();
            while siblings.len() < k {
                let t = rng.below(vocab) as u32;
                if !siblings.contains(&t) {
                    siblings.push(t);
                }
            }
            DraftStep {
                token: siblings[0],
                confidence: 0.5,
                siblings,
                draft_dist: Vec::new(),
            }
        })
        .collect();
    DraftTree { steps }
}

/// One losslessness fixture: a model, a request and a session config.
pub struct Fixture {
    pub label: String,
    pub bundle: ModelBundle,
    pub request: GenerationRequest,
    pub config: SwiftConfig,
}

/// Fixture `i` of the greedy sweep: 2-8 blocks, d_model 32-64, vocab 64-260,
/// prompts 4-32, 64-128 new tokens, epsilon in {0, 0.3, 0.6}, r in {0.25, 0.5}.
pub fn greedy_fixture(i: u64) -> Fixture {
    let mut rng = SessionRng::new(i, "greedy-fixture");
    let blocks = 2 + rng.below(7);
    let d_model = [32, 48, 64][rng.below(3)];
    let vocab = [64, 100, 160, 260][rng.below(4)];
    let prompt_len = 4 + rng.below(29);
    let new_tokens = 64 + rng.below(65);
    let epsilon = [0.0, 0.3, 0.6][(i % 3) as usize];
    let ratio = [0.25, 0.5][((i / 3) % 2) as usize];
    let sublayers = 2 * blocks;
    let planted: Vec<usize> = (1..sublayers - 1).filter(|_| rng.below(3) == 0).collect();
    let config = ArchConfig::new(blocks, d_model, 4, 2 * d_model, vocab, 192);
    let bundle = make_synthetic_model(i, config, &planted).unwrap();
    let prompt = random_tokens(&mut rng, prompt_len, vocab.min(256));
    Fixture {
        label: format!("fixture {i}: {blocks} blocks, d {d_model}, vocab {vocab}, eps {epsilon}, r {ratio}"),
        bundle,
        request: GenerationRequest::greedy(prompt, new_tokens),
        config: SwiftConfig {
            epsilon,
            seed: i,
            optimizer: OptimizerConfig {
                skip_ratio: ratio,
                gamma: 16 + rng.below(17),
                ..OptimizerConfig::default()
            },
            ..SwiftConfig::default()
        },
    }
}

pub const TRIGGERS: std::ops::RangeInclusive<u32> = 65..=90;

/// Four blocks with planted no-ops at 1, 4, 5 and a trigger-gated attention
/// sublayer at 2: trigger-free text prefers skipping {1, 2, 4, 5}; uppercase
/// text makes skipping sublayer 2 costly.
pub fn gated_model() -> ModelBundle {
    make_gated_model(&GatedModelSpec {
        seed: 11,
        config: ArchConfig::new(4, 64, 4, 128, 260, 512),
        planted: vec![1, 4, 5],
        gate: 2,
        triggers: TRIGGERS.collect(),
        gate_gain: 4.0,
    })
    .unwrap()
}

pub fn byte_prompt(text: &str) -> Vec<u32> {
    std::iter::once(256).chain(text.bytes().map(u32::from)).collect()
}

pub const LOWER_PROMPTS: [&str; 4] = [
    "the quick brown fox",
    "jumps over the lazy dog",
    "a small model",
    "numbers and letters",
];
pub const UPPER_PROMPTS: [&str; 3] = ["THE QUICK BROWN FOX", "JUMPS OVER", "A SMALL MODEL"];

/// Planted sublayers for convergence trial `seed`: four distinct interior
/// indices of a 12-sublayer model.
pub fn planted_set(seed: u64) -> Vec<usize> {
    let mut rng = SessionRng::new(seed, "planted");
    let mut planted = Vec::new();
    while planted.len() < 4 {
        let i = 1 + rng.below(10);
        if !planted.contains(&i) {
            planted.push(i);
        }
    }
    planted.sort_unstable();
    planted
}
