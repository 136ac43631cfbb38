use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphnet::{SpatialConfig, DEFAULT_KEEP_FRACTION, DEFAULT_SLOPE, DEFAULT_THRESHOLD};
use crate::seq2seq::{ModelConfig, TransformerConfig};

pub const STANDARD_HORIZONS: [usize; 4] = [2, 4, 8, 16];

/// What to do with origins whose horizon runs past the end of the test range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailPolicy {
    Skip,
    Truncate,
}

impl std::str::FromStr for TailPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(Self::Skip),
            "truncate" => Ok(Self::Truncate),
            _ => Err(Error::Config(format!("unknown tail policy {s:?}"))),
        }
    }
}

impl std::fmt::Display for TailPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Skip => "skip",
            Self::Truncate => "truncate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub horizon: usize,
    /// Input window; `None` means `3 · horizon`.
    pub window: Option<usize>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Minimum validation improvement that resets patience.
    pub min_delta: f64,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub batch_size: usize,
    pub keep_fraction: f64,
    pub seed: u64,
    /// Last canonical week index whose target may be used for training.
    pub train_end: usize,
    pub test_start: usize,
    pub test_end: usize,
    pub validation_fraction: f64,
    pub tail_policy: TailPolicy,
    pub max_lag: usize,
    pub threshold: f64,
    pub target_as_feature: bool,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub d_node: usize,
    pub gat_layers: usize,
    pub gat_heads: usize,
    /// Evaluate eval-mode training MSE after every epoch (slower).
    pub track_train_mse: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            horizon: 2,
            window: None,
            learning_rate: 1e-4,
            max_epochs: 100,
            patience: 20,
            min_delta: 1e-8,
            max_steps: None,
            batch_size: 32,
            keep_fraction: DEFAULT_KEEP_FRACTION,
            seed: 0,
            train_end: 850,
            test_start: 900,
            test_end: 991,
            validation_fraction: 0.10,
            tail_policy: TailPolicy::Skip,
            max_lag: crate::dataprep::DEFAULT_MAX_LAG,
            threshold: DEFAULT_THRESHOLD,
            target_as_feature: false,
            d_model: 256,
            n_heads: 8,
            d_ff: 256,
            dropout: 0.05,
            encoder_layers: 2,
            decoder_layers: 2,
            d_node: 16,
            gat_layers: 2,
            gat_heads: 4,
            track_train_mse: false,
        }
    }
}

impl TrainConfig {
    pub fn window(&self) -> usize {
        self.window.unwrap_or(3 * self.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.window() < self.horizon {
            return bad(format!(
                "window {} shorter than horizon {}",
                self.window(),
                self.horizon
            ));
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)".into());
        }
        if self.test_start > self.test_end {
            return bad(format!(
                "test range {}..{} is empty",
                self.test_start, self.test_end
            ));
        }
        if self.test_start <= self.train_end {
            return bad(format!(
                "test range starts at {} but training runs to {}",
                self.test_start, self.train_end
            ));
        }
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            spatial: SpatialConfig {
                d_node: self.d_node,
                gat_layers: self.gat_layers,
                gat_heads: self.gat_heads,
                slope: DEFAULT_SLOPE,
                keep_fraction: self.keep_fraction,
            },
            transformer: TransformerConfig {
                d_model: self.d_model,
                n_heads: self.n_heads,
                d_ff: self.d_ff,
                dropout: self.dropout,
                encoder_layers: self.encoder_layers,
                decoder_layers: self.decoder_layers,
            },
            window: self.window(),
            horizon: self.horizon,
        }
    }
}
