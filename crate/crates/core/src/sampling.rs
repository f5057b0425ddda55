//! Token distributions and the session random stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transformer::softmax_row;

/// Temperature and nucleus filtering, applied identically to draft and
/// target logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 1.0,
            top_p: 1.0,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be > 0, got {}", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        Ok(())
    }

    pub fn distribution(&self, logits: &[f32]) -> Result<Vec<f64>> {
        let p = softmax_row(logits, self.temperature)?;
        Ok(apply_top_p(p, self.top_p))
    }
}

/// Keeps the smallest highest-probability set whose mass reaches `top_p`
/// and renormalizes. Ties are ordered by token id.
pub fn apply_top_p(mut p: Vec<f64>, top_p: f64) -> Vec<f64> {
    if top_p >= 1.0 {
        return p;
    }
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let mut mass = 0.0;
    let mut keep = order.len();
    for (n, &i) in order.iter().enumerate() {
        mass += p[i];
        if mass >= top_p {
            keep = n + 1;
            break;
        }
    }
    for &i in &order[keep..] {
        p[i] = 0.0;
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// Inverse-CDF draw from `dist` with `u` in `[0, 1)`. Zero-mass entries are
/// never returned.
pub fn sample_index(dist: &[f64], u: f64) -> usize {
    let total: f64 = dist.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if target < acc {
            return i;
        }
    }
    last
}

/// Checks a probability vector: finite, non-negative, summing to 1 within 1e-6.
pub fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidDistribution("entries must be finite and non-negative".into()));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidDistribution(format!("sums to {sum}")));
    }
    Ok(())
}

/// Named, seeded ChaCha stream. Every stochastic decision in a session draws
/// from one of these in a fixed order, so runs replay exactly.
#[derive(Debug, Clone)]
pub struct SessionRng {
    rng: ChaCha8Rng,
    draws: u64,
}

impl SessionRng {
    pub fn new(seed: u64, name: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(fnv1a(name.as_bytes()));
        SessionRng { rng, draws: 0 }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.rng.gen::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.draws += 1;
        self.rng.gen_range(0..n)
    }

    /// Number of draws taken so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_p_keeps_nucleus() {
        let p = apply_top_p(vec![0.1, 0.5, 0.3, 0.1], 0.75);
        assert_eq!(p[0], 0.0);
        assert_eq!(p[3], 0.0);
        assert!((p[1] - 0.625).abs() < 1e-12);
        assert!((p[2] - 0.375).abs() < 1e-12);
    }

    #[test]
    fn inverse_cdf() {
        let d = [0.25, 0.0, 0.75];
        assert_eq!(sample_index(&d, 0.0), 0);
        assert_eq!(sample_index(&d, 0.2499), 0);
        assert_eq!(sample_index(&d, 0.25), 2);
        assert_eq!(sample_index(&d, 0.999_999), 2);
    }

    #[test]
    fn named_streams_differ_and_replay() {
        let mut a = SessionRng::new(5, "verify");
        let mut b = SessionRng::new(5, "verify");
        let mut c = SessionRng::new(5, "optimizer");
        let xa: Vec<f64> = (0..4).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..4).map(|_| b.uniform()).collect();
        let xc: Vec<f64> = (0..4).map(|_| c.uniform()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_eq!(a.draws(), 4);
    }
}
