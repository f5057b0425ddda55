//! Model bundles: architecture, weights, tokenizer, the `SWFT1` container and
//! synthetic fixtures.

mod bundle;
mod config;
mod format;
pub mod synthetic;
mod tokenizer;

pub use bundle::{BlockWeights, ModelBundle, Tensor, Weights};
pub use config::{ArchConfig, Sublayer};
pub use format::{from_bytes, load_bundle, save_bundle, to_bytes, MAGIC};
pub use synthetic::{make_gated_model, make_synthetic_model, GatedModelSpec};
pub use tokenizer::Tokenizer;
