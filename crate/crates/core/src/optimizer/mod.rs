//! On-the-fly search for the skipped-sublayer set.
//!
//! Each optimization step scores one candidate mask by matchness against the
//! recent context, feeds the score to a GP surrogate, and keeps the best mask
//! for drafting. Suggestions are random except on every `bayes_interval`-th
//! step, which maximizes expected improvement instead.

mod context;
mod gp;
mod suggest;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use context::{evaluate_candidate, ContextBuffer};
pub use gp::{GpPosterior, GpSurrogate};
pub use suggest::MaskSpace;

use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::sampling::SessionRng;
use crate::transformer::{KvCache, LayerMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Context window size in generated tokens.
    pub gamma: usize,
    pub max_opt_steps: usize,
    pub bayes_interval: usize,
    pub patience: usize,
    pub score_target: f64,
    pub skip_ratio: f64,
    pub alpha_tolerance: f64,
    pub length_scale: f64,
    pub xi: f64,
    /// Never skip the first or last sublayer.
    pub protect_endpoints: bool,
    pub ratio_step: f64,
    pub ratio_floor: f64,
    pub ei_starts: usize,
    pub ei_iters: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            gamma: 32,
            max_opt_steps: 1000,
            bayes_interval: 25,
            patience: 300,
            score_target: 0.95,
            skip_ratio: 0.45,
            alpha_tolerance: 0.7,
            length_scale: 1.0,
            xi: 0.01,
            protect_endpoints: true,
            ratio_step: 0.1,
            ratio_floor: 0.1,
            ei_starts: 8,
            ei_iters: 40,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.gamma == 0 {
            return bad("gamma must be at least 1");
        }
        if self.bayes_interval == 0 {
            return bad("bayes-interval must be at least 1");
        }
        if self.max_opt_steps == 0 {
            return bad("max-opt-steps must be at least 1");
        }
        if !(self.skip_ratio > 0.0 && self.skip_ratio < 1.0) {
            return bad("skip-ratio must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.score_target) || !(0.0..=1.0).contains(&self.alpha_tolerance) {
            return bad("score-target and alpha-tolerance must lie in [0, 1]");
        }
        if !(self.length_scale > 0.0) || !(self.xi >= 0.0) {
            return bad("length-scale must be positive and xi non-negative");
        }
        if !(self.ratio_floor > 0.0 && self.ratio_step > 0.0) {
            return bad("ratio-step and ratio-floor must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    ContextAccumulation,
    Optimizing,
    Accelerating,
}

/// Why optimization stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ScoreTarget,
    Patience,
    MaxSteps,
}

/// Number of sublayers skipped at ratio `r`.
pub fn skip_count(sublayers: usize, r: f64) -> usize {
    (r * sublayers as f64).round() as usize
}

/// Evenly spaced interior skip pattern with `round(r * L)` sublayers.
///
/// Indices are `1 + floor(i * s + s / 2)` with stride `s = (L - 2) / m`, which
/// centres the pattern inside `[1, L - 2]`.
pub fn init_uniform_mask(sublayers: usize, r: f64) -> Result<LayerMask> {
    let too_large = Error::RatioTooLarge { ratio: r, sublayers };
    if !(r > 0.0 && r < 1.0) {
        return Err(too_large);
    }
    let m = skip_count(sublayers, r);
    if m == 0 || m + 2 > sublayers {
        return Err(too_large);
    }
    let stride = (sublayers - 2) as f64 / m as f64;
    let skipped = (0..m).map(|i| 1 + (i as f64 * stride + stride / 2.0).floor() as usize);
    Ok(LayerMask::from_skipped(sublayers, skipped))
}

/// Whether the 1-based step `o` takes the Bayesian branch: every `interval`-th step.
pub fn is_bayesian_step(o: usize, interval: usize) -> bool {
    interval > 0 && o > 0 && o % interval == 0
}

/// Outcome of one optimization step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeRecord {
    /// 1-based step index.
    pub step: usize,
    pub bayesian: bool,
    pub mask: LayerMask,
    pub score: f64,
    pub improved: bool,
    pub best_score: f64,
    pub terminated: Option<Termination>,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    sublayers: usize,
    phase: Phase,
    steps: usize,
    best_mask: LayerMask,
    best_score: f64,
    steps_since_improve: usize,
    skip_ratio: f64,
    surrogate: GpSurrogate,
    restarts: usize,
}

impl OptimizerState {
    pub fn new(sublayers: usize, config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        let skip_ratio = config.skip_ratio;
        let mut state = OptimizerState {
            sublayers,
            phase: Phase::ContextAccumulation,
            steps: 0,
            best_mask: LayerMask::full(sublayers),
            best_score: 0.0,
            steps_since_improve: 0,
            skip_ratio,
            surrogate: GpSurrogate::new(config.length_scale, config.xi),
            restarts: 0,
            config,
        };
        state.reset_search()?;
        Ok(state)
    }

    /// A state that drafts with `mask` forever and never optimizes.
    pub fn fixed(mask: LayerMask, config: OptimizerConfig) -> Self {
        OptimizerState {
            sublayers: mask.len(),
            phase: Phase::Accelerating,
            steps: 0,
            skip_ratio: mask.skip_ratio(),
            best_mask: mask,
            best_score: 0.0,
            steps_since_improve: 0,
            surrogate: GpSurrogate::new(config.length_scale, config.xi),
            restarts: 0,
            config,
        }
    }

    fn reset_search(&mut self) -> Result<()> {
        self.best_mask = if self.config.protect_endpoints {
            init_uniform_mask(self.sublayers, self.skip_ratio)?
        } else {
            let m = skip_count(self.sublayers, self.skip_ratio);
            if m == 0 || m >= self.sublayers {
                return Err(Error::RatioTooLarge {
                    ratio: self.skip_ratio,
                    sublayers: self.sublayers,
                });
            }
            init_uniform_mask(self.sublayers, self.skip_ratio)
                .unwrap_or_else(|_| LayerMask::from_skipped(self.sublayers, 0..m))
        };
        self.best_score = 0.0;
        self.steps = 0;
        self.steps_since_improve = 0;
        self.surrogate.clear();
        Ok(())
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Completed optimization steps since the last (re)start.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn best_mask(&self) -> &LayerMask {
        &self.best_mask
    }

    pub fn best_score(&self) -> f64 {
        self.best_score
    }

    pub fn steps_since_improve(&self) -> usize {
        self.steps_since_improve
    }

    pub fn skip_ratio(&self) -> f64 {
        self.skip_ratio
    }

    pub fn surrogate(&self) -> &GpSurrogate {
        &self.surrogate
    }

    /// Number of alpha-tolerance restarts so far.
    pub fn restarts(&self) -> usize {
        self.restarts
    }

    pub fn space(&self) -> MaskSpace {
        MaskSpace::new(
            self.sublayers,
            skip_count(self.sublayers, self.skip_ratio),
            self.config.protect_endpoints,
        )
    }

    /// Moves between accumulation and optimization as context becomes
    /// available; a no-op once accelerating.
    pub fn sync_context(&mut self, context_ready: bool) -> Phase {
        self.phase = match (self.phase, context_ready) {
            (Phase::Accelerating, _) => Phase::Accelerating,
            (_, true) => Phase::Optimizing,
            (_, false) => Phase::ContextAccumulation,
        };
        self.phase
    }

    fn excluded(&self) -> HashSet<Vec<bool>> {
        let mut set: HashSet<Vec<bool>> = self
            .surrogate
            .observations()
            .iter()
            .map(|(x, _)| x.iter().map(|&v| v > 0.5).collect())
            .collect();
        set.insert(self.best_mask.bits().to_vec());
        set
    }

    /// Candidate for the next step, `steps() + 1`.
    pub fn suggest(&self, rng: &mut SessionRng) -> (LayerMask, bool) {
        let space = self.space();
        let exclude = self.excluded();
        let o = self.steps + 1;
        if is_bayesian_step(o, self.config.bayes_interval) {
            if let Some(post) = self.surrogate.fit() {
                let seeds = vec![self.best_mask.to_unit_vector()];
                let ends = suggest::maximize_ei(
                    &post,
                    self.sublayers,
                    &seeds,
                    self.config.ei_starts,
                    self.config.ei_iters,
                    rng,
                );
                if let Some(mask) = suggest::bayesian_choice(&post, &space, &ends, &exclude) {
                    return (mask, true);
                }
            }
            return (space.random_excluding(&exclude, rng), true);
        }
        (space.random_excluding(&exclude, rng), false)
    }

    /// Records a scored candidate and applies the termination rules.
    pub fn record(&mut self, mask: &LayerMask, score: f64, bayesian: bool) -> OptimizeRecord {
        self.steps += 1;
        self.surrogate.observe(mask.to_unit_vector(), score);
        let improved = score > self.best_score;
        if improved {
            self.best_score = score;
            self.best_mask = mask.clone();
            self.steps_since_improve = 0;
        } else {
            self.steps_since_improve += 1;
        }
        let terminated = if self.best_score > self.config.score_target {
            Some(Termination::ScoreTarget)
        } else if self.steps_since_improve >= self.config.patience {
            Some(Termination::Patience)
        } else if self.steps >= self.config.max_opt_steps {
            Some(Termination::MaxSteps)
        } else {
            None
        };
        if terminated.is_some() {
            self.phase = Phase::Accelerating;
        }
        OptimizeRecord {
            step: self.steps,
            bayesian,
            mask: mask.clone(),
            score,
            improved,
            best_score: self.best_score,
            terminated,
        }
    }

    /// Suggest, evaluate with one masked forward, record.
    pub fn optimize_step(
        &mut self,
        bundle: &ModelBundle,
        cache: &mut KvCache,
        ctx: &ContextBuffer,
        rng: &mut SessionRng,
    ) -> Result<OptimizeRecord> {
        if self.phase != Phase::Optimizing {
            return Err(Error::BadRequest(format!("optimize_step in phase {:?}", self.phase)));
        }
        let (mask, bayesian) = self.suggest(rng);
        let score = evaluate_candidate(bundle, cache, &mask, ctx)?;
        Ok(self.record(&mask, score, bayesian))
    }

    /// Lowers the skip ratio and restarts the search when the measured
    /// acceptance rate falls below tolerance. Returns whether it restarted.
    ///
    /// Only acts while accelerating. The ratio keeps its value when one more
    /// decrement would leave no sublayer to skip.
    pub fn check_alpha_tolerance(&mut self, measured_alpha: f64) -> Result<bool> {
        if self.phase != Phase::Accelerating || !(measured_alpha < self.config.alpha_tolerance) {
            return Ok(false);
        }
        let lowered = ((self.skip_ratio - self.config.ratio_step) * 10.0).round() / 10.0;
        let lowered = lowered.max(self.config.ratio_floor);
        if skip_count(self.sublayers, lowered) >= 1 {
            self.skip_ratio = lowered;
        }
        self.reset_search()?;
        self.phase = Phase::Optimizing;
        self.restarts += 1;
        Ok(true)
    }
}
