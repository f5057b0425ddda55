use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::transformer::{argmax, forward, AttentionMaskSpec, KvCache, LayerMask, Parent};

/// Token history of the current instance; the last `gamma` generated tokens
/// form the evaluation window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextBuffer {
    tokens: Vec<u32>,
    prompt_len: usize,
    gamma: usize,
}

impl ContextBuffer {
    pub fn new(prompt: &[u32], gamma: usize) -> Self {
        ContextBuffer {
            tokens: prompt.to_vec(),
            prompt_len: prompt.len(),
            gamma,
        }
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn push(&mut self, tokens: &[u32]) {
        self.tokens.extend_from_slice(tokens);
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn generated(&self) -> usize {
        self.tokens.len() - self.prompt_len
    }

    pub fn is_ready(&self) -> bool {
        self.gamma > 0 && self.generated() >= self.gamma && self.tokens.len() > self.gamma
    }

    /// The last `gamma` tokens.
    pub fn window(&self) -> &[u32] {
        &self.tokens[self.tokens.len().saturating_sub(self.gamma)..]
    }
}

/// Fraction of the window the masked model reproduces under teacher forcing.
///
/// One parallel forward: the input predicting window token `i` sits at its
/// predecessor's position and attends only to the committed rows before it
/// (target KV) plus itself. `cache` must hold committed rows for every token
/// except possibly the last one; it is left unchanged.
pub fn evaluate_candidate(bundle: &ModelBundle, cache: &mut KvCache, mask: &LayerMask, ctx: &ContextBuffer) -> Result<f64> {
    let gamma = ctx.gamma;
    if !ctx.is_ready() {
        return Err(Error::InsufficientContext {
            have: ctx.generated(),
            need: gamma.max(1),
        });
    }
    let n = ctx.tokens.len();
    if cache.committed_len() + 1 < n || cache.chain_len() + 1 < n {
        return Err(Error::InsufficientContext {
            have: cache.committed_len(),
            need: n - 1,
        });
    }
    let first = n - gamma - 1;
    let inputs: Vec<u32> = ctx.tokens[first..n - 1].to_vec();
    let parents: Vec<Parent> = (first..n - 1).map(Parent::Prefix).collect();

    let mark = cache.checkpoint();
    let logits = forward(bundle, cache, &inputs, mask, &AttentionMaskSpec::Tree(parents), false);
    cache.rollback(mark)?;
    let logits = logits?;

    let matches = (0..gamma)
        .filter(|&i| argmax(logits.row(i)) as u32 == ctx.tokens[first + 1 + i])
        .count();
    Ok(matches as f64 / gamma as f64)
}
