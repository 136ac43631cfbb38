//! Weekly epidemiological forecasting with a correlation graph over lagged
//! variables, a top-k feature gate, GATv2 message passing and a Transformer
//! encoder-decoder, all running on a small reverse-mode tape.

pub mod dataprep;
pub mod error;
pub mod graphnet;
pub mod seq2seq;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
