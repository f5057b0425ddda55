// A task shift inside one stream: a sublayer that only matters for
// uppercase text. The layer set found on lowercase prompts stops being
// accepted, the skip ratio drops and the search restarts.

use swift_core::model::{make_gated_model, ArchConfig, GatedModelSpec};
use swift_core::optimizer::OptimizerConfig;
use swift_core::session::{GenerationRequest, Session, SwiftConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = make_gated_model(&GatedModelSpec {
        seed: 11,
        config: ArchConfig::new(4, 64, 4, 128, 260, 512),
        planted: vec![1, 4, 5],
        gate: 2,
        triggers: (b'A' as u32..=b'Z' as u32).collect(),
        gate_gain: 4.0,
    })?;
    let config = SwiftConfig {
        optimizer: OptimizerConfig {
            skip_ratio: 0.5,
            gamma: 32,
            ..OptimizerConfig::default()
        },
        ..SwiftConfig::default()
    };
    let mut session = Session::new(&bundle, config)?;
    let prompts = [
        "the quick brown fox",
        "jumps over the lazy dog",
        "a small model",
        "numbers and letters",
        "THE QUICK BROWN FOX",
        "JUMPS OVER",
        "A SMALL MODEL",
    ];
    for text in prompts {
        let mut prompt = vec![bundle.tokenizer.bos()];
        prompt.extend(bundle.tokenizer.encode(text)?);
        session.run(&GenerationRequest::greedy(prompt, 96))?;
    }
    for e in &session.trace().events {
        println!("instance {} {:?} -> {:?} ({:?}, r = {})", e.instance, e.from, e.to, e.cause, e.skip_ratio);
    }
    for (i, s) in session.trace().instances.iter().enumerate() {
        let round = |a: Option<f64>| a.map(|a| (a * 100.0).round() / 100.0);
        println!(
            "instance {i}: alpha {:?} (converged mask only {:?}), r {}",
            round(s.alpha),
            round(s.accelerating_alpha),
            s.end_skip_ratio
        );
    }
    println!("restarts {}, final mask {}", session.state().restarts(), session.state().best_mask());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
