//! Transformer encoder-decoder over per-week embeddings, the differenced
//! forecast head, and reverse differencing back to case counts.

mod check;
mod checkpoint;
mod model;
mod transformer;

pub use check::{layer_grad_checks, tiny_model, LayerCheck, CHECK_EPSILON, CHECK_TOLERANCE, LAYER_GROUPS};
pub use checkpoint::FORMAT_TAG;
pub use model::{ForwardOutput, ModelConfig, ModelState};
pub use transformer::{causal_mask, positional_encoding, Mode, TransformerConfig};
