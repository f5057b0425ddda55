use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::StepRecord;

/// Expected wall-time speedup of speculative decoding,
/// `M * alpha / ((M - 1) * c + alpha)`, for mean generated length `m`,
/// acceptance rate `alpha` and draft/target cost ratio `c`.
pub fn expected_speedup(m: f64, alpha: f64, c: f64) -> Result<f64> {
    if !(m >= 1.0 && m.is_finite()) {
        return Err(Error::OutOfRange(m));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::OutOfRange(alpha));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::OutOfRange(c));
    }
    let denom = (m - 1.0) * c + alpha;
    if denom == 0.0 {
        return Err(Error::DivZero);
    }
    Ok(m * alpha / denom)
}

/// Fractions of total wall time; always sum to 1 when total time is nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageShares {
    pub draft: f64,
    pub verify: f64,
    pub optimize: f64,
    pub other: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub emitted: usize,
    pub verify_calls: usize,
    pub accepted_drafts: usize,
    pub draft_steps: usize,
    /// Mean tokens emitted per target verification forward.
    pub m: f64,
    /// Accepted draft tokens over draft steps; 0 when nothing was drafted.
    pub alpha: f64,
    /// Mean skip ratio of the drafting masks over verify calls.
    pub r: f64,
    pub c: f64,
    /// `None` when undefined (no drafting at all).
    pub expected_speedup: Option<f64>,
    pub wall_speedup: Option<f64>,
    pub tokens_per_sec: f64,
    pub total_ns: u64,
    pub vanilla_ns: Option<u64>,
    pub stage_shares: StageShares,
}

impl MetricsReport {
    /// Aggregates verify records; `total_ns` is the end-to-end wall time they
    /// were produced in.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a StepRecord>, total_ns: u64) -> Self {
        let (mut emitted, mut calls, mut accepted, mut steps) = (0usize, 0usize, 0usize, 0usize);
        let (mut draft_ns, mut verify_ns, mut optimize_ns) = (0u64, 0u64, 0u64);
        let mut ratio_sum = 0.0;
        for r in records {
            emitted += r.emitted;
            calls += 1;
            accepted += r.accepted_drafts;
            steps += r.spine_len;
            draft_ns += r.draft_ns;
            verify_ns += r.verify_ns;
            optimize_ns += r.optimize_ns;
            ratio_sum += r.skip_ratio;
        }
        let m = if calls > 0 { emitted as f64 / calls as f64 } else { 0.0 };
        let alpha = if steps > 0 { accepted as f64 / steps as f64 } else { 0.0 };
        let r = if calls > 0 { ratio_sum / calls as f64 } else { 0.0 };
        let c = 1.0 - r;
        let staged = draft_ns + verify_ns + optimize_ns;
        let total = total_ns.max(staged);
        let share = |x: u64| if total > 0 { x as f64 / total as f64 } else { 0.0 };
        let stage_shares = StageShares {
            draft: share(draft_ns),
            verify: share(verify_ns),
            optimize: share(optimize_ns),
            other: share(total - staged),
        };
        MetricsReport {
            emitted,
            verify_calls: calls,
            accepted_drafts: accepted,
            draft_steps: steps,
            m,
            alpha,
            r,
            c,
            expected_speedup: expected_speedup(m, alpha, c).ok(),
            wall_speedup: None,
            tokens_per_sec: if total > 0 { emitted as f64 / (total as f64 * 1e-9) } else { 0.0 },
            total_ns: total,
            vanilla_ns: None,
            stage_shares,
        }
    }

    pub fn with_vanilla(mut self, vanilla_ns: u64) -> Self {
        self.vanilla_ns = Some(vanilla_ns);
        self.wall_speedup = (self.total_ns > 0).then(|| vanilla_ns as f64 / self.total_ns as f64);
        self
    }
}
