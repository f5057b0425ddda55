// Searching for a skip set directly: score candidates by matchness on a
// generated context until the planted no-op sublayers are found.

use swift_core::model::{make_synthetic_model, ArchConfig};
use swift_core::optimizer::{ContextBuffer, OptimizerConfig, OptimizerState, Phase};
use swift_core::sampling::SessionRng;
use swift_core::session::{generate_vanilla, GenerationRequest};
use swift_core::transformer::{forward, AttentionMaskSpec, KvCache, LayerMask};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let planted = [2usize, 5, 7, 9];
    let bundle = make_synthetic_model(4, ArchConfig::new(6, 32, 4, 64, 64, 256), &planted)?;
    let prompt: Vec<u32> = vec![3, 14, 15, 9, 26, 5, 35, 8];
    let generated = generate_vanilla(&bundle, &GenerationRequest::greedy(prompt.clone(), 40))?;

    let mut ctx = ContextBuffer::new(&prompt, 32);
    ctx.push(&generated.tokens);
    let tokens = ctx.tokens();
    // Matchness reuses the target's cached prefix.
    let mut cache = KvCache::with_capacity(&bundle.config, 128);
    let full = LayerMask::full(bundle.sublayers());
    forward(&bundle, &mut cache, &tokens[..tokens.len() - 1], &full, &AttentionMaskSpec::Causal, true)?;

    let config = OptimizerConfig {
        skip_ratio: 1.0 / 3.0,
        max_opt_steps: 300,
        ..OptimizerConfig::default()
    };
    let mut state = OptimizerState::new(bundle.sublayers(), config)?;
    state.sync_context(ctx.is_ready());
    let mut rng = SessionRng::new(0, "optimizer");
    while state.phase() == Phase::Optimizing {
        let rec = state.optimize_step(&bundle, &mut cache, &ctx, &mut rng)?;
        if rec.improved {
            println!("step {:>3}{} {} matchness {:.3}", rec.step, if rec.bayesian { "*" } else { " " }, rec.mask, rec.score);
        }
    }
    println!("best {} after {} steps", state.best_mask(), state.steps());
    assert_eq!(state.best_mask().skipped().collect::<Vec<_>>(), planted);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
