//! Seeded random models with planted structure, used as test fixtures.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::bundle::{ModelBundle, Tensor};
use crate::model::config::ArchConfig;
use crate::model::tokenizer::Tokenizer;

fn check_plants(config: &ArchConfig, planted: &[usize]) -> Result<()> {
    match planted.iter().find(|&&i| i >= config.sublayers()) {
        Some(&index) => Err(Error::BadPlantIndex {
            index,
            sublayers: config.sublayers(),
        }),
        None => Ok(()),
    }
}

/// Name of the tensor that writes a sublayer's output into the residual stream.
pub fn output_projection(sublayer: usize) -> String {
    let block = sublayer / 2;
    if sublayer % 2 == 0 {
        format!("blocks.{block}.attn.wo")
    } else {
        format!("blocks.{block}.mlp.w_down")
    }
}

/// Query/key multiplier. Unit-scale scores average attention over the whole
/// history and greedy decoding settles on a single repeated token.
pub const QK_GAIN: f32 = 3.0;

fn random_tensors(seed: u64, config: &ArchConfig) -> BTreeMap<String, Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, 1.0 / (config.d_model as f32).sqrt()).expect("valid std");
    config
        .manifest()
        .into_iter()
        .map(|(name, shape)| {
            let n = shape.iter().product();
            let data = if name.ends_with("norm") {
                vec![1.0; n]
            } else if name.ends_with(".wq") || name.ends_with(".wk") {
                (0..n).map(|_| QK_GAIN * normal.sample(&mut rng)).collect()
            } else {
                (0..n).map(|_| normal.sample(&mut rng)).collect()
            };
            (name, Tensor::new(shape, data))
        })
        .collect()
}

/// Gaussian init scaled by `1/sqrt(d_model)`; each planted sublayer gets a
/// zero output projection, so skipping it leaves the logits unchanged.
pub fn make_synthetic_model(seed: u64, config: ArchConfig, planted: &[usize]) -> Result<ModelBundle> {
    config.validate()?;
    check_plants(&config, planted)?;
    let mut tensors = random_tensors(seed, &config);
    for &i in planted {
        let t = tensors.get_mut(&output_projection(i)).expect("manifest tensor");
        t.data.fill(0.0);
    }
    ModelBundle::from_tensors(config, tensors, Tokenizer::default_for_vocab(config.vocab_size))
}

/// A model with one attention sublayer that is a no-op unless a trigger
/// token appears in the context.
///
/// Residual channel 0 carries a trigger flag and channel 1 a constant; no
/// sublayer writes either channel. The gate's value projection reads only
/// channel 0, so its output is exactly zero on trigger-free contexts. Trigger
/// tokens get a strongly negative output-head logit so the model itself
/// (practically) never emits them.
#[derive(Debug, Clone)]
pub struct GatedModelSpec {
    pub seed: u64,
    pub config: ArchConfig,
    pub planted: Vec<usize>,
    /// Attention sublayer index (must be even).
    pub gate: usize,
    pub triggers: Vec<u32>,
    /// Multiplier on the gate's output projection.
    pub gate_gain: f32,
}

pub fn make_gated_model(spec: &GatedModelSpec) -> Result<ModelBundle> {
    let config = spec.config;
    config.validate()?;
    check_plants(&config, &spec.planted)?;
    check_plants(&config, &[spec.gate])?;
    if spec.gate % 2 != 0 {
        return Err(Error::InvalidConfig("gate sublayer must be an attention sublayer".into()));
    }
    if config.d_model < 4 {
        return Err(Error::InvalidConfig("gated model needs d_model >= 4".into()));
    }
    if let Some(&t) = spec.triggers.iter().find(|&&t| t as usize >= config.vocab_size) {
        return Err(Error::BadToken {
            token: t,
            vocab: config.vocab_size,
        });
    }
    let d = config.d_model;
    let mut tensors = random_tensors(spec.seed, &config);

    let emb = tensors.get_mut("tok_embeddings").unwrap();
    for tok in 0..config.vocab_size {
        let row = &mut emb.data[tok * d..(tok + 1) * d];
        row[0] = if spec.triggers.contains(&(tok as u32)) { 2.0 } else { 0.0 };
        row[1] = 2.0;
    }
    for s in 0..config.sublayers() {
        let t = tensors.get_mut(&output_projection(s)).unwrap();
        let cols = t.shape[1];
        t.data[..2 * cols].fill(0.0);
        if spec.planted.contains(&s) {
            t.data.fill(0.0);
        }
        if s == spec.gate {
            t.data.iter_mut().for_each(|v| *v *= spec.gate_gain);
        }
    }
    let wv = tensors.get_mut(&format!("blocks.{}.attn.wv", spec.gate / 2)).unwrap();
    for r in 0..d {
        for c in 1..d {
            wv.data[r * d + c] = 0.0;
        }
        wv.data[r * d] *= (d as f32).sqrt();
    }
    let head = tensors.get_mut("lm_head").unwrap();
    for &t in &spec.triggers {
        let row = &mut head.data[t as usize * d..(t as usize + 1) * d];
        row.fill(0.0);
        row[1] = -50.0;
    }
    ModelBundle::from_tensors(config, tensors, Tokenizer::default_for_vocab(config.vocab_size))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let cfg = ArchConfig::new(2, 16, 2, 32, 40, 32);
        let a = make_synthetic_model(7, cfg, &[]).unwrap();
        let b = make_synthetic_model(7, cfg, &[]).unwrap();
        let c = make_synthetic_model(8, cfg, &[]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn planted_projection_zeroed() {
        let cfg = ArchConfig::new(2, 16, 2, 32, 40, 32);
        let m = make_synthetic_model(7, cfg, &[1, 2]).unwrap();
        assert!(m.weights.blocks[0].w_down.data.iter().all(|&v| v == 0.0));
        assert!(m.weights.blocks[1].wo.data.iter().all(|&v| v == 0.0));
        assert!(m.weights.blocks[0].wo.data.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn bad_plant_index() {
        let cfg = ArchConfig::new(2, 16, 2, 32, 40, 32);
        assert!(matches!(
            make_synthetic_model(1, cfg, &[4]),
            Err(Error::BadPlantIndex { index: 4, sublayers: 4 })
        ));
    }
}
