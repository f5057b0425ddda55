// One draft/verify cycle by hand: draft a candidate tree with a skipped
// layer set, then verify every branch in a single target forward.

use swift_core::draft::{draft, DraftMode};
use swift_core::model::{make_synthetic_model, ArchConfig};
use swift_core::transformer::{forward, AttentionMaskSpec, KvCache, LayerMask};
use swift_core::verify::verify_greedy;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = make_synthetic_model(9, ArchConfig::new(3, 32, 4, 64, 64, 128), &[2])?;
    let history = [4u32, 8, 15, 16, 23];
    let (pending, prefix) = history.split_last().unwrap();

    // The cache holds everything but the last emitted token.
    let mut cache = KvCache::with_capacity(&bundle.config, 64);
    let full = LayerMask::full(bundle.sublayers());
    forward(&bundle, &mut cache, prefix, &full, &AttentionMaskSpec::Causal, true)?;

    let mask = LayerMask::from_skipped(bundle.sublayers(), [2, 3]);
    let tree = draft(&bundle, &mut cache, &mask, *pending, 0.0, 4, DraftMode::Greedy)?;
    for (depth, step) in tree.steps.iter().enumerate() {
        println!("depth {}: spine {} (p = {:.2}), candidates {:?}", depth + 1, step.token, step.confidence, step.siblings);
    }
    let lin = tree.linearize()?;
    println!("{} tree nodes verified in one forward", lin.len() + 1);

    let before = cache.committed_len();
    let out = verify_greedy(&bundle, &mut cache, *pending, &tree)?;
    println!("accepted {} drafts, emitted {:?}", out.accepted_draft_count, out.accepted_tokens);
    assert_eq!(cache.committed_len(), before + out.accepted_tokens.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
