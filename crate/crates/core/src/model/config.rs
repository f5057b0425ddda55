use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decoder-only transformer architecture.
///
/// The model is a stack of `n_blocks` pre-norm blocks, each contributing two
/// skippable sublayers: attention (even index) and MLP (odd index).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub n_blocks: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub norm_eps: f32,
}

/// One skippable unit of the residual stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sublayer {
    Attention { block: usize },
    Mlp { block: usize },
}

impl Sublayer {
    pub fn from_index(index: usize) -> Self {
        let block = index / 2;
        if index % 2 == 0 {
            Sublayer::Attention { block }
        } else {
            Sublayer::Mlp { block }
        }
    }
}

impl ArchConfig {
    pub fn new(n_blocks: usize, d_model: usize, n_heads: usize, d_ff: usize, vocab_size: usize, max_seq: usize) -> Self {
        ArchConfig {
            n_blocks,
            d_model,
            n_heads,
            d_ff,
            vocab_size,
            max_seq,
            norm_eps: 1e-5,
        }
    }

    /// Number of skippable sublayers, `2 * n_blocks`.
    pub fn sublayers(&self) -> usize {
        2 * self.n_blocks
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_blocks", self.n_blocks),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
        ];
        for (name, value) in dims {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if self.max_seq < 2 {
            return Err(Error::InvalidConfig("max_seq must be at least 2".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(self.norm_eps.is_finite() && self.norm_eps > 0.0) {
            return Err(Error::InvalidConfig("norm_eps must be a small positive float".into()));
        }
        Ok(())
    }

    /// Every tensor the architecture requires, in serialization order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let mut out = vec![("tok_embeddings".to_string(), vec![self.vocab_size, d])];
        for b in 0..self.n_blocks {
            out.push((format!("blocks.{b}.attn_norm"), vec![d]));
            for proj in ["wq", "wk", "wv", "wo"] {
                out.push((format!("blocks.{b}.attn.{proj}"), vec![d, d]));
            }
            out.push((format!("blocks.{b}.mlp_norm"), vec![d]));
            out.push((format!("blocks.{b}.mlp.w_up"), vec![self.d_ff, d]));
            out.push((format!("blocks.{b}.mlp.w_down"), vec![d, self.d_ff]));
        }
        out.push(("final_norm".to_string(), vec![d]));
        out.push(("lm_head".to_string(), vec![self.vocab_size, d]));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sublayer_order_alternates() {
        assert_eq!(Sublayer::from_index(0), Sublayer::Attention { block: 0 });
        assert_eq!(Sublayer::from_index(1), Sublayer::Mlp { block: 0 });
        assert_eq!(Sublayer::from_index(4), Sublayer::Attention { block: 2 });
    }

    #[test]
    fn rejects_indivisible_heads() {
        let cfg = ArchConfig::new(2, 30, 4, 16, 8, 16);
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn rejects_short_context() {
        let cfg = ArchConfig::new(2, 8, 2, 16, 8, 1);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn manifest_counts() {
        let cfg = ArchConfig::new(2, 8, 2, 16, 8, 16);
        assert_eq!(cfg.sublayers(), 4);
        assert_eq!(cfg.manifest().len(), 1 + 2 * 8 + 2);
    }
}
