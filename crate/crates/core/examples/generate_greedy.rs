// Greedy self-speculative generation on a synthetic model, checked against
// plain autoregressive decoding.

use swift_core::model::{make_synthetic_model, ArchConfig};
use swift_core::optimizer::OptimizerConfig;
use swift_core::session::{generate_vanilla, GenerationRequest, Session, SwiftConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = make_synthetic_model(7, ArchConfig::new(4, 64, 4, 128, 260, 512), &[1, 4, 5])?;
    let prompt = bundle.tokenizer.encode("once upon a time")?;
    let request = GenerationRequest::greedy(prompt, 96);

    let config = SwiftConfig {
        optimizer: OptimizerConfig {
            skip_ratio: 0.375,
            gamma: 24,
            ..OptimizerConfig::default()
        },
        ..SwiftConfig::default()
    };
    let mut session = Session::new(&bundle, config)?;
    let out = session.run(&request)?;
    assert_eq!(out, generate_vanilla(&bundle, &request)?, "greedy output is lossless");

    let trace = session.trace();
    let summary = &trace.instances[0];
    println!(
        "{} tokens in {} verify calls ({:.2} per call), final phase {:?}, mask {}",
        out.tokens.len(),
        summary.verify_calls,
        out.tokens.len() as f64 / summary.verify_calls as f64,
        summary.end_phase,
        session.state().best_mask()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
