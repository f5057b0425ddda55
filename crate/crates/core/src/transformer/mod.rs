//! Deterministic decoder-only forward pass with per-sublayer skipping,
//! tree-structured attention and a rollback-capable KV cache.

mod attention;
mod cache;
mod forward;
mod mask;

pub use attention::{AttentionMaskSpec, Parent, Visibility};
pub use cache::{CacheMark, KvCache};
pub use forward::{argmax, forward, softmax_row, top_k, LogitsBlock};
pub use mask::LayerMask;
