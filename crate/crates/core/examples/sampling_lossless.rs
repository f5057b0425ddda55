// Sampling mode: the emitted token law equals the target's, whatever the
// draft. Compares empirical first-token frequencies with the exact law.

use std::collections::BTreeMap;

use swift_core::model::{make_synthetic_model, ArchConfig};
use swift_core::sampling::SamplingParams;
use swift_core::session::{GenerationRequest, Session, SwiftConfig};
use swift_core::transformer::{forward, AttentionMaskSpec, KvCache, LayerMask};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = make_synthetic_model(3, ArchConfig::new(2, 16, 2, 32, 12, 64), &[])?;
    let prompt = vec![2u32, 5, 7];
    let params = SamplingParams {
        temperature: 1.0,
        top_p: 1.0,
    };

    let mut cache = KvCache::with_capacity(&bundle.config, 8);
    let full = LayerMask::full(bundle.sublayers());
    let logits = forward(&bundle, &mut cache, &prompt, &full, &AttentionMaskSpec::Causal, true)?;
    let exact = params.distribution(logits.row(prompt.len() - 1))?;

    // A deliberately poor draft: attention of block 0 and the MLP of block 1 skipped.
    let config = SwiftConfig {
        fixed_mask: Some(LayerMask::from_skipped(4, [0, 3])),
        ..SwiftConfig::default()
    };
    let mut session = Session::new(&bundle, config)?;
    let runs = 4000;
    let mut counts = BTreeMap::new();
    for seed in 0..runs {
        let out = session.run(&GenerationRequest::sample(prompt.clone(), 2, params, seed))?;
        *counts.entry(out.tokens[0]).or_insert(0usize) += 1;
    }
    let tv: f64 = exact
        .iter()
        .enumerate()
        .map(|(t, p)| (p - *counts.get(&(t as u32)).unwrap_or(&0) as f64 / runs as f64).abs())
        .sum::<f64>()
        / 2.0;
    println!("total variation between empirical and exact first-token law: {tv:.4}");
    assert!(tv < 0.05);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
