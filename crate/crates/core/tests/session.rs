mod common;

use common::*;
use swift_core::optimizer::{OptimizerConfig, Phase};
use swift_core::sampling::SamplingParams;
use swift_core::session::{generate_vanilla, DecodeMode, GenerationRequest, Session, SwiftConfig, TransitionCause};
use swift_core::transformer::LayerMask;

fn config(ratio: f64, gamma: usize) -> SwiftConfig {
    SwiftConfig {
        optimizer: OptimizerConfig {
            skip_ratio: ratio,
            gamma,
            ..OptimizerConfig::default()
        },
        ..SwiftConfig::default()
    }
}

#[test]
fn trace_accounts_for_every_token() {
    let bundle = gated_model();
    let mut session = Session::new(&bundle, config(0.5, 16)).unwrap();
    let mut total = 0;
    for text in LOWER_PROMPTS {
        let out = session.run(&GenerationRequest::greedy(byte_prompt(text), 40)).unwrap();
        assert_eq!(out.tokens.len(), 40);
        total += out.tokens.len();
    }
    let trace = session.trace();
    assert_eq!(trace.emitted(), total);
    assert_eq!(trace.instances.len(), LOWER_PROMPTS.len());
    for (i, inst) in trace.instances.iter().enumerate() {
        let recs: Vec<_> = trace.records.iter().filter(|r| r.instance == i).collect();
        assert_eq!(inst.verify_calls, recs.len());
        assert_eq!(inst.emitted, recs.iter().map(|r| r.emitted).sum::<usize>());
        assert!(recs.iter().all(|r| r.accepted_drafts <= r.spine_len && r.emitted <= r.accepted_drafts + 1));
    }
    let json: serde_json::Value = serde_json::from_str(&session.export_trace().unwrap()).unwrap();
    assert_eq!(json["records"].as_array().unwrap().len(), trace.records.len());
}

#[test]
fn optimization_waits_for_context() {
    let bundle = gated_model();
    let mut session = Session::new(&bundle, config(0.5, 32)).unwrap();
    session.run(&GenerationRequest::greedy(byte_prompt("abc"), 20)).unwrap();
    assert!(session.trace().optimize.is_empty(), "20 tokens cannot fill a 32-token window");
    assert!(session.trace().records.iter().all(|r| r.phase == Phase::ContextAccumulation));

    session.run(&GenerationRequest::greedy(byte_prompt("abc"), 64)).unwrap();
    let trace = session.trace();
    let ready = trace.events.iter().find(|e| e.cause == TransitionCause::ContextReady).unwrap();
    assert_eq!(ready.instance, 1);
    assert!(trace.records[..ready.at_record].iter().all(|r| r.matchness.is_none()));
    assert!(trace.optimize.iter().all(|(i, _)| *i == 1));
    assert!(!trace.optimize.is_empty());
}

#[test]
fn lossless_fixed_mask_accepts_everything() {
    let bundle = gated_model();
    let cfg = SwiftConfig {
        fixed_mask: Some(LayerMask::from_skipped(8, [1, 4, 5])),
        ..SwiftConfig::default()
    };
    let mut session = Session::new(&bundle, cfg).unwrap();
    let req = GenerationRequest::greedy(byte_prompt("MIXED case Text"), 64);
    assert_eq!(session.run(&req).unwrap(), generate_vanilla(&bundle, &req).unwrap());
    let inst = &session.trace().instances[0];
    assert_eq!(inst.alpha, Some(1.0));
    assert_eq!(inst.accelerating_alpha, Some(1.0));
    assert_eq!(inst.end_phase, Phase::Accelerating);
    assert!(session.trace().optimize.is_empty());
}

#[test]
fn sampling_is_seed_deterministic() {
    let bundle = gated_model();
    let params = SamplingParams {
        temperature: 0.8,
        top_p: 0.95,
    };
    let req = GenerationRequest::sample(byte_prompt("seeded"), 48, params, 99);
    assert_eq!(req.mode, DecodeMode::Sample);
    let run = || Session::new(&bundle, config(0.5, 16)).unwrap().run(&req).unwrap();
    assert_eq!(run(), run());
    let other = Session::new(&bundle, config(0.5, 16))
        .unwrap()
        .run(&GenerationRequest::sample(byte_prompt("seeded"), 48, params, 100))
        .unwrap();
    assert_ne!(run(), other);
}

#[test]
fn bad_configs_rejected() {
    let bundle = tiny_model(0, 16, &[]);
    let bad = SwiftConfig {
        epsilon: 1.0,
        ..SwiftConfig::default()
    };
    assert!(Session::new(&bundle, bad).is_err());
    let wrong_len = SwiftConfig {
        fixed_mask: Some(LayerMask::full(6)),
        ..SwiftConfig::default()
    };
    assert!(Session::new(&bundle, wrong_len).is_err());
}
