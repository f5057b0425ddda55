use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::config::ArchConfig;
use crate::model::tokenizer::Tokenizer;

/// Dense row-major f32 array.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n])
    }

    /// Row `r` of a 2-D tensor.
    pub fn row(&self, r: usize) -> &[f32] {
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }
}

/// Bitwise equality, so `-0.0 != 0.0` and round trips are checked exactly.
impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub attn_norm: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub mlp_norm: Tensor,
    pub w_up: Tensor,
    pub w_down: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub tok_embeddings: Tensor,
    pub blocks: Vec<BlockWeights>,
    pub final_norm: Tensor,
    pub lm_head: Tensor,
}

/// Validated weights, architecture and tokenizer. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: ArchConfig,
    pub weights: Weights,
    pub tokenizer: Tokenizer,
}

impl ModelBundle {
    /// Builds a bundle from named tensors, checking every manifest entry.
    pub fn from_tensors(
        config: ArchConfig,
        mut tensors: BTreeMap<String, Tensor>,
        tokenizer: Tokenizer,
    ) -> Result<Self> {
        config.validate()?;
        tokenizer.validate(config.vocab_size)?;
        for (name, shape) in config.manifest() {
            let t = tensors.get(&name).ok_or_else(|| Error::MissingTensor(name.clone()))?;
            if t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::ShapeMismatch {
                    name,
                    expected: shape,
                    got: t.shape.clone(),
                });
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteWeight(name));
            }
        }
        if tensors.len() != config.manifest().len() {
            let known: Vec<String> = config.manifest().into_iter().map(|(n, _)| n).collect();
            let extra = tensors.keys().find(|k| !known.contains(k)).cloned().unwrap_or_default();
            return Err(Error::BadHeader(format!("unexpected tensor {extra}")));
        }

        let mut take = |name: String| tensors.remove(&name).expect("checked above");
        let tok_embeddings = take("tok_embeddings".into());
        let blocks = (0..config.n_blocks)
            .map(|b| BlockWeights {
                attn_norm: take(format!("blocks.{b}.attn_norm")),
                wq: take(format!("blocks.{b}.attn.wq")),
                wk: take(format!("blocks.{b}.attn.wk")),
                wv: take(format!("blocks.{b}.attn.wv")),
                wo: take(format!("blocks.{b}.attn.wo")),
                mlp_norm: take(format!("blocks.{b}.mlp_norm")),
                w_up: take(format!("blocks.{b}.mlp.w_up")),
                w_down: take(format!("blocks.{b}.mlp.w_down")),
            })
            .collect();
        let final_norm = take("final_norm".into());
        let lm_head = take("lm_head".into());
        Ok(ModelBundle {
            config,
            weights: Weights {
                tok_embeddings,
                blocks,
                final_norm,
                lm_head,
            },
            tokenizer,
        })
    }

    /// Tensors paired with their manifest names, in manifest order.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let w = &self.weights;
        let mut out = vec![("tok_embeddings".to_string(), &w.tok_embeddings)];
        for (b, blk) in w.blocks.iter().enumerate() {
            out.push((format!("blocks.{b}.attn_norm"), &blk.attn_norm));
            out.push((format!("blocks.{b}.attn.wq"), &blk.wq));
            out.push((format!("blocks.{b}.attn.wk"), &blk.wk));
            out.push((format!("blocks.{b}.attn.wv"), &blk.wv));
            out.push((format!("blocks.{b}.attn.wo"), &blk.wo));
            out.push((format!("blocks.{b}.mlp_norm"), &blk.mlp_norm));
            out.push((format!("blocks.{b}.mlp.w_up"), &blk.w_up));
            out.push((format!("blocks.{b}.mlp.w_down"), &blk.w_down));
        }
        out.push(("final_norm".to_string(), &w.final_norm));
        out.push(("lm_head".to_string(), &w.lm_head));
        out
    }

    pub fn into_tensors(self) -> BTreeMap<String, Tensor> {
        self.tensors().into_iter().map(|(n, t)| (n, t.clone())).collect()
    }

    pub fn sublayers(&self) -> usize {
        self.config.sublayers()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }
}
