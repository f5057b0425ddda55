//! Candidate generation: uniform-random masks between Bayesian steps, EI
//! maximization over the relaxed hypercube on every `bayes_interval`-th step.

use std::collections::HashSet;

use super::gp::GpPosterior;
use crate::sampling::SessionRng;
use crate::transformer::LayerMask;

/// Combination counts up to this bound are enumerated exactly.
const ENUMERATION_LIMIT: u128 = 20_000;
const REJECTION_TRIES: usize = 4_096;

/// The sublayers a mask may skip and how many it must skip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSpace {
    pub sublayers: usize,
    pub allowed: Vec<usize>,
    pub skip_count: usize,
}

impl MaskSpace {
    pub fn new(sublayers: usize, skip_count: usize, protect_endpoints: bool) -> Self {
        let allowed = if protect_endpoints {
            (1..sublayers.saturating_sub(1)).collect()
        } else {
            (0..sublayers).collect()
        };
        MaskSpace {
            sublayers,
            allowed,
            skip_count,
        }
    }

    pub fn size(&self) -> u128 {
        binomial(self.allowed.len(), self.skip_count)
    }

    pub fn contains(&self, mask: &LayerMask) -> bool {
        mask.len() == self.sublayers
            && mask.popcount() == self.skip_count
            && mask.skipped().all(|i| self.allowed.contains(&i))
    }

    fn mask_of(&self, chosen: &[usize]) -> LayerMask {
        LayerMask::from_skipped(self.sublayers, chosen.iter().map(|&c| self.allowed[c]))
    }

    fn random_mask(&self, rng: &mut SessionRng) -> LayerMask {
        // Partial Fisher-Yates over the allowed positions.
        let mut pool: Vec<usize> = (0..self.allowed.len()).collect();
        for i in 0..self.skip_count {
            let j = i + rng.below(pool.len() - i);
            pool.swap(i, j);
        }
        let mut chosen = pool[..self.skip_count].to_vec();
        chosen.sort_unstable();
        self.mask_of(&chosen)
    }

    fn enumerate(&self) -> Vec<LayerMask> {
        let n = self.allowed.len();
        let k = self.skip_count;
        let mut out = Vec::new();
        let mut idx: Vec<usize> = (0..k).collect();
        if k > n {
            return out;
        }
        loop {
            out.push(self.mask_of(&idx));
            let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
                return out;
            };
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }

    /// Uniform over masks outside `exclude`; uniform over the whole space if
    /// it is exhausted.
    pub fn random_excluding(&self, exclude: &HashSet<Vec<bool>>, rng: &mut SessionRng) -> LayerMask {
        if self.size() <= ENUMERATION_LIMIT {
            let fresh: Vec<LayerMask> = self
                .enumerate()
                .into_iter()
                .filter(|m| !exclude.contains(m.bits()))
                .collect();
            if !fresh.is_empty() {
                let i = rng.below(fresh.len());
                return fresh[i].clone();
            }
            return self.random_mask(rng);
        }
        let mut mask = self.random_mask(rng);
        for _ in 0..REJECTION_TRIES {
            if !exclude.contains(mask.bits()) {
                break;
            }
            mask = self.random_mask(rng);
        }
        mask
    }

    /// Sets the `skip_count` largest allowed coordinates; ties go to the
    /// lower index.
    pub fn project(&self, x: &[f64]) -> LayerMask {
        let mut order: Vec<usize> = (0..self.allowed.len()).collect();
        order.sort_by(|&a, &b| x[self.allowed[b]].total_cmp(&x[self.allowed[a]]).then(a.cmp(&b)));
        let mut chosen = order[..self.skip_count].to_vec();
        chosen.sort_unstable();
        self.mask_of(&chosen)
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    acc
}

/// Multi-start projected gradient ascent on expected improvement.
pub(crate) fn maximize_ei(
    post: &GpPosterior,
    dim: usize,
    seeds: &[Vec<f64>],
    random_starts: usize,
    iters: usize,
    rng: &mut SessionRng,
) -> Vec<Vec<f64>> {
    let mut starts: Vec<Vec<f64>> = seeds.to_vec();
    for _ in 0..random_starts {
        starts.push((0..dim).map(|_| rng.uniform()).collect());
    }
    starts
        .into_iter()
        .map(|mut x| {
            let (mut value, mut grad) = post.expected_improvement_grad(&x);
            let mut step = 0.25;
            for _ in 0..iters {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm < 1e-12 || step < 1e-6 {
                    break;
                }
                let cand: Vec<f64> = x
                    .iter()
                    .zip(&grad)
                    .map(|(xi, gi)| (xi + step * gi / norm).clamp(0.0, 1.0))
                    .collect();
                let (cv, cg) = post.expected_improvement_grad(&cand);
                if cv > value {
                    x = cand;
                    value = cv;
                    grad = cg;
                    step *= 1.5;
                } else {
                    step *= 0.5;
                }
            }
            x
        })
        .collect()
}

/// Best-EI mask among the projections of the ascent endpoints, then among
/// their one-swap neighbours, skipping excluded masks.
pub(crate) fn bayesian_choice(
    post: &GpPosterior,
    space: &MaskSpace,
    endpoints: &[Vec<f64>],
    exclude: &HashSet<Vec<bool>>,
) -> Option<LayerMask> {
    let score = |m: &LayerMask| post.expected_improvement(&m.to_unit_vector());
    let mut projected: Vec<LayerMask> = endpoints.iter().map(|x| space.project(x)).collect();
    projected.dedup();
    let best_fresh = |cands: &[LayerMask]| {
        cands
            .iter()
            .filter(|m| !exclude.contains(m.bits()))
            .map(|m| (score(m), m))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, m)| m.clone())
    };
    if let Some(m) = best_fresh(&projected) {
        return Some(m);
    }
    let mut neighbours = Vec::new();
    for m in &projected {
        let bits = m.bits();
        for &out in space.allowed.iter().filter(|&&i| bits[i]) {
            for &inn in space.allowed.iter().filter(|&&i| !bits[i]) {
                let mut b = bits.to_vec();
                b[out] = false;
                b[inn] = true;
                neighbours.push(LayerMask::from_bits(b));
            }
        }
    }
    best_fresh(&neighbours)
}
