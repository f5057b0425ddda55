//! Per-stream decoding: optional optimization step, draft, verify, commit.
//!
//! A session owns the optimizer state for a stream of requests. Each request
//! is one instance with its own KV cache and context window; the optimizer
//! state carries across instances.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::draft::{draft, DraftMode, DraftTree, DEFAULT_EPSILON, DEFAULT_MAX_DRAFT};
use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::optimizer::{ContextBuffer, OptimizeRecord, OptimizerConfig, OptimizerState, Phase};
use crate::sampling::{sample_index, SamplingParams, SessionRng};
use crate::transformer::{argmax, forward, AttentionMaskSpec, KvCache, LayerMask};
use crate::verify::{verify_greedy, verify_sampling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    Greedy,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: Vec<u32>,
    pub max_new_tokens: usize,
    pub mode: DecodeMode,
    pub sampling: SamplingParams,
    /// Generation ends after emitting any of these.
    pub stop_tokens: Vec<u32>,
    pub seed: u64,
}

impl GenerationRequest {
    pub fn greedy(prompt: Vec<u32>, max_new_tokens: usize) -> Self {
        GenerationRequest {
            prompt,
            max_new_tokens,
            mode: DecodeMode::Greedy,
            sampling: SamplingParams::default(),
            stop_tokens: Vec::new(),
            seed: 0,
        }
    }

    pub fn sample(prompt: Vec<u32>, max_new_tokens: usize, sampling: SamplingParams, seed: u64) -> Self {
        GenerationRequest {
            prompt,
            max_new_tokens,
            mode: DecodeMode::Sample,
            sampling,
            stop_tokens: Vec::new(),
            seed,
        }
    }

    pub fn validate(&self, bundle: &ModelBundle) -> Result<()> {
        if self.max_new_tokens == 0 {
            return Err(Error::BadRequest("max_new_tokens must be at least 1".into()));
        }
        if self.prompt.is_empty() {
            return Err(Error::BadRequest("empty prompt".into()));
        }
        let max_seq = bundle.config.max_seq;
        if self.prompt.len() + self.max_new_tokens > max_seq {
            return Err(Error::BadRequest(format!(
                "prompt of {} plus {} new tokens exceeds max_seq {max_seq}",
                self.prompt.len(),
                self.max_new_tokens
            )));
        }
        let vocab = bundle.config.vocab_size;
        if let Some(&t) = self.prompt.iter().find(|&&t| t as usize >= vocab) {
            return Err(Error::BadToken { token: t, vocab });
        }
        if self.mode == DecodeMode::Sample {
            self.sampling.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwiftConfig {
    /// Drafting stops after a step whose top-1 probability is below this.
    pub epsilon: f64,
    pub max_draft: usize,
    /// Seed of the optimizer's random stream.
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Draft with this mask and never optimize.
    pub fixed_mask: Option<LayerMask>,
}

impl Default for SwiftConfig {
    fn default() -> Self {
        SwiftConfig {
            epsilon: DEFAULT_EPSILON,
            max_draft: DEFAULT_MAX_DRAFT,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            fixed_mask: None,
        }
    }
}

impl SwiftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon must lie in [0, 1), got {}", self.epsilon)));
        }
        if self.max_draft == 0 {
            return Err(Error::Config("max_draft must be at least 1".into()));
        }
        self.optimizer.validate()
    }
}

/// One verify call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub instance: usize,
    pub phase: Phase,
    /// Bitstring of the drafting mask.
    pub mask: String,
    pub skip_ratio: f64,
    pub spine_len: usize,
    pub accepted_drafts: usize,
    /// Tokens emitted by this call after stop-token truncation.
    pub emitted: usize,
    pub draft_ns: u64,
    pub verify_ns: u64,
    pub optimize_ns: u64,
    /// Matchness of the candidate scored just before this call.
    pub matchness: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionCause {
    ContextReady,
    NewInstance,
    Converged,
    AlphaTolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEvent {
    pub instance: usize,
    /// Index into the step records at which the transition took effect.
    pub at_record: usize,
    pub from: Phase,
    pub to: Phase,
    pub cause: TransitionCause,
    pub skip_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub prompt_len: usize,
    pub emitted: usize,
    pub verify_calls: usize,
    pub accepted_drafts: usize,
    pub draft_steps: usize,
    pub alpha: Option<f64>,
    /// Acceptance over calls drafted with a converged mask; the value the
    /// tolerance check sees.
    pub accelerating_alpha: Option<f64>,
    pub end_phase: Phase,
    pub end_skip_ratio: f64,
    pub total_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub records: Vec<StepRecord>,
    pub optimize: Vec<(usize, OptimizeRecord)>,
    pub events: Vec<PhaseEvent>,
    pub instances: Vec<InstanceSummary>,
}

impl SessionTrace {
    pub fn emitted(&self) -> usize {
        self.records.iter().map(|r| r.emitted).sum()
    }

    pub fn verify_calls(&self) -> usize {
        self.records.len()
    }
}

/// Output of one request.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub tokens: Vec<u32>,
    pub stopped: bool,
}

pub struct Session<'a> {
    bundle: &'a ModelBundle,
    config: SwiftConfig,
    state: OptimizerState,
    opt_rng: SessionRng,
    trace: SessionTrace,
}

fn elapsed_ns(t: Instant) -> u64 {
    t.elapsed().as_nanos() as u64
}

/// Cache able to hold a full request plus the largest verification batch.
fn request_cache(bundle: &ModelBundle, config: &SwiftConfig) -> KvCache {
    let headroom = (config.max_draft * 10 + 1).max(config.optimizer.gamma);
    KvCache::with_capacity(&bundle.config, bundle.config.max_seq + headroom)
}

fn prefill(bundle: &ModelBundle, cache: &mut KvCache, prompt: &[u32]) -> Result<()> {
    if prompt.len() > 1 {
        let full = LayerMask::full(bundle.sublayers());
        forward(bundle, cache, &prompt[..prompt.len() - 1], &full, &AttentionMaskSpec::Causal, true)?;
    }
    Ok(())
}

impl<'a> Session<'a> {
    pub fn new(bundle: &'a ModelBundle, config: SwiftConfig) -> Result<Self> {
        config.validate()?;
        let state = match &config.fixed_mask {
            Some(mask) => {
                if mask.len() != bundle.sublayers() {
                    return Err(Error::MaskLengthMismatch {
                        expected: bundle.sublayers(),
                        got: mask.len(),
                    });
                }
                OptimizerState::fixed(mask.clone(), config.optimizer.clone())
            }
            None => OptimizerState::new(bundle.sublayers(), config.optimizer.clone())?,
        };
        Ok(Session {
            bundle,
            opt_rng: SessionRng::new(config.seed, "optimizer"),
            config,
            state,
            trace: SessionTrace::default(),
        })
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn config(&self) -> &SwiftConfig {
        &self.config
    }

    pub fn trace(&self) -> &SessionTrace {
        &self.trace
    }

    pub fn export_trace(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.trace).map_err(|e| Error::BadRequest(e.to_string()))
    }

    fn set_phase(&mut self, to: Phase, cause: TransitionCause, instance: usize, from: Phase) {
        if from != to {
            self.trace.events.push(PhaseEvent {
                instance,
                at_record: self.trace.records.len(),
                from,
                to,
                cause,
                skip_ratio: self.state.skip_ratio(),
            });
        }
    }

    /// Runs one request as the next instance of the stream. On error the
    /// trace keeps every record completed so far.
    pub fn run(&mut self, request: &GenerationRequest) -> Result<Generation> {
        request.validate(self.bundle)?;
        let started = Instant::now();
        let bundle = self.bundle;
        let instance = self.trace.instances.len();
        let mut cache = request_cache(bundle, &self.config);
        let mut sample_rng = SessionRng::new(request.seed, "sample");
        let mut ctx = ContextBuffer::new(&request.prompt, self.config.optimizer.gamma);
        prefill(bundle, &mut cache, &request.prompt)?;

        let mut pending = *request.prompt.last().expect("validated non-empty");
        let mut out = Vec::with_capacity(request.max_new_tokens);
        let mut stopped = false;
        let (mut accepted_total, mut spine_total, mut calls) = (0, 0, 0);
        let (mut accel_accepted, mut accel_spine) = (0, 0);
        let mut first_step = true;

        while out.len() < request.max_new_tokens && !stopped {
            let before = self.state.phase();
            let after = self.state.sync_context(ctx.is_ready());
            let cause = if first_step && after == Phase::ContextAccumulation {
                TransitionCause::NewInstance
            } else {
                TransitionCause::ContextReady
            };
            self.set_phase(after, cause, instance, before);
            first_step = false;

            let mut optimize_ns = 0;
            let mut matchness = None;
            if self.state.phase() == Phase::Optimizing {
                let t = Instant::now();
                let rec = self.state.optimize_step(bundle, &mut cache, &ctx, &mut self.opt_rng)?;
                optimize_ns = elapsed_ns(t);
                matchness = Some(rec.score);
                if rec.terminated.is_some() {
                    self.set_phase(Phase::Accelerating, TransitionCause::Converged, instance, Phase::Optimizing);
                }
                self.trace.optimize.push((instance, rec));
            }

            let phase = self.state.phase();
            let mask = self.state.best_mask().clone();
            let remaining = request.max_new_tokens - out.len();
            let n_max = self.config.max_draft.min(remaining - 1);

            let t = Instant::now();
            let tree = if n_max == 0 {
                DraftTree::default()
            } else {
                let mode = match request.mode {
                    DecodeMode::Greedy => DraftMode::Greedy,
                    DecodeMode::Sample => DraftMode::Sample {
                        params: request.sampling,
                        rng: &mut sample_rng,
                    },
                };
                draft(bundle, &mut cache, &mask, pending, self.config.epsilon, n_max, mode)?
            };
            let draft_ns = elapsed_ns(t);

            let t = Instant::now();
            let outcome = match request.mode {
                DecodeMode::Greedy => verify_greedy(bundle, &mut cache, pending, &tree)?,
                DecodeMode::Sample => {
                    verify_sampling(bundle, &mut cache, pending, &tree, &request.sampling, &mut sample_rng)?
                }
            };
            let verify_ns = elapsed_ns(t);

            let mut emitted = outcome.accepted_tokens;
            emitted.truncate(remaining);
            if let Some(i) = emitted.iter().position(|t| request.stop_tokens.contains(t)) {
                emitted.truncate(i + 1);
                stopped = true;
            }
            pending = *emitted.last().expect("verification emits at least one token");
            ctx.push(&emitted);
            out.extend_from_slice(&emitted);
            accepted_total += outcome.accepted_draft_count;
            spine_total += outcome.draft_spine_len;
            if phase == Phase::Accelerating {
                accel_accepted += outcome.accepted_draft_count;
                accel_spine += outcome.draft_spine_len;
            }
            calls += 1;
            self.trace.records.push(StepRecord {
                instance,
                phase,
                mask: mask.to_bitstring(),
                skip_ratio: mask.skip_ratio(),
                spine_len: outcome.draft_spine_len,
                accepted_drafts: outcome.accepted_draft_count,
                emitted: emitted.len(),
                draft_ns,
                verify_ns,
                optimize_ns,
                matchness,
            });
        }

        let alpha = (spine_total > 0).then(|| accepted_total as f64 / spine_total as f64);
        // Tolerance is judged on drafts made with the converged mask only.
        let accelerating_alpha = (accel_spine > 0).then(|| accel_accepted as f64 / accel_spine as f64);
        if let (Some(a), None) = (accelerating_alpha, &self.config.fixed_mask) {
            if self.state.check_alpha_tolerance(a)? {
                self.set_phase(Phase::Optimizing, TransitionCause::AlphaTolerance, instance, Phase::Accelerating);
            }
        }
        self.trace.instances.push(InstanceSummary {
            prompt_len: request.prompt.len(),
            emitted: out.len(),
            verify_calls: calls,
            accepted_drafts: accepted_total,
            draft_steps: spine_total,
            alpha,
            accelerating_alpha,
            end_phase: self.state.phase(),
            end_skip_ratio: self.state.skip_ratio(),
            total_ns: elapsed_ns(started),
        });
        Ok(Generation { tokens: out, stopped })
    }
}

/// Plain autoregressive decoding with the full model: the losslessness
/// oracle and the speed baseline.
pub fn generate_vanilla(bundle: &ModelBundle, request: &GenerationRequest) -> Result<Generation> {
    request.validate(bundle)?;
    let mut cache = KvCache::with_capacity(&bundle.config, bundle.config.max_seq);
    let mut rng = SessionRng::new(request.seed, "vanilla");
    let full = LayerMask::full(bundle.sublayers());
    prefill(bundle, &mut cache, &request.prompt)?;
    let mut pending = *request.prompt.last().expect("validated non-empty");
    let mut out = Vec::with_capacity(request.max_new_tokens);
    while out.len() < request.max_new_tokens {
        let logits = forward(bundle, &mut cache, &[pending], &full, &AttentionMaskSpec::Causal, true)?;
        let next = match request.mode {
            DecodeMode::Greedy => argmax(logits.row(0)) as u32,
            DecodeMode::Sample => {
                let p = request.sampling.distribution(logits.row(0))?;
                sample_index(&p, rng.uniform()) as u32
            }
        };
        out.push(next);
        pending = next;
        if request.stop_tokens.contains(&next) {
            return Ok(Generation { tokens: out, stopped: true });
        }
    }
    Ok(Generation { tokens: out, stopped: false })
}
