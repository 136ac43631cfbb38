use serde::{Deserialize, Serialize};

use super::transformer::{Mode, TransformerConfig};
use crate::dataprep::{inverse_difference, Prepared, Sample, ScalerState};
use crate::error::{contract, Result};
use crate::graphnet::{gate_values, select_top_k, top_k_count, Selection, SpatialConfig, VariableGraph};
use crate::tensor::{seeded_rng, stream_rng, Bound, ParamMap, Rng64, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub spatial: SpatialConfig,
    pub transformer: TransformerConfig,
    pub window: usize,
    pub horizon: usize,
}

impl ModelConfig {
    /// Default architecture with window `3·horizon`.
    pub fn for_horizon(horizon: usize) -> Self {
        Self {
            spatial: SpatialConfig::default(),
            transformer: TransformerConfig::default(),
            window: 3 * horizon,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spatial.validate()?;
        self.transformer.validate()?;
        if self.horizon == 0 || self.window < self.horizon {
            return Err(contract(format!(
                "window {} must be at least horizon {} > 0",
                self.window, self.horizon
            )));
        }
        Ok(())
    }
}

/// Everything needed to forecast: configuration, weights, the graph and
/// the scaler fitted during preparation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: ParamMap,
    pub graph: VariableGraph,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub scaler: ScalerState,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[B, H]` scaled differenced predictions.
    pub deltas: Var,
    pub selection: Selection,
    pub encoder_attention: Vec<Var>,
    pub decoder_self_attention: Vec<Var>,
    pub decoder_cross_attention: Vec<Var>,
}

impl ModelState {
    pub fn new(config: ModelConfig, prepared: &Prepared, graph: VariableGraph, seed: u64) -> Result<Self> {
        config.validate()?;
        if graph.node_names != prepared.feature_names {
            return Err(contract("graph nodes do not match the prepared feature columns"));
        }
        let mut rng = stream_rng(seed, 1);
        let mut params = ParamMap::new();
        let m = prepared.n_features();
        config
            .spatial
            .init(&mut rng, m, config.transformer.d_model, &mut params)?;
        config.transformer.init(&mut rng, &mut params)?;
        Ok(Self {
            config,
            params,
            graph,
            feature_names: prepared.feature_names.clone(),
            target_name: prepared.target_name.clone(),
            scaler: prepared.scaler.clone(),
            seed,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// `inputs: [B·w·M]`, `decoder: [B·w]`, both row-major.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &[f64],
        decoder: &[f64],
        batch: usize,
        mode: &mut Mode<'_>,
    ) -> Result<ForwardOutput> {
        let (w, m, d) = (self.config.window, self.n_features(), self.config.transformer.d_model);
        if inputs.len() != batch * w * m || decoder.len() != batch * w {
            return Err(contract(format!(
                "batch of {batch} needs {} inputs and {} decoder values, got {} and {}",
                batch * w * m,
                batch * w,
                inputs.len(),
                decoder.len()
            )));
        }
        let x = tape.constant(&[batch * w, m], inputs.to_vec())?;
        let spatial = self.config.spatial.forward(tape, bound, x, &self.graph)?;
        let z = tape.reshape(spatial.z, &[batch, w, d])?;
        let tf = &self.config.transformer;
        let (z_enc, enc_maps) = tf.encode(tape, bound, z, mode)?;
        let y_in = tape.constant(&[batch, w], decoder.to_vec())?;
        let (z_dec, selfs, crosses) = tf.decode(tape, bound, y_in, z_enc, mode)?;
        let deltas = tf.head(tape, bound, z_dec, self.config.horizon)?;
        Ok(ForwardOutput {
            deltas,
            selection: spatial.selection,
            encoder_attention: enc_maps,
            decoder_self_attention: selfs,
            decoder_cross_attention: crosses,
        })
    }

    /// Evaluation-mode scaled differenced predictions, `[B·H]`.
    pub fn predict_deltas(&self, inputs: &[f64], decoder: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = Bound::bind(&mut tape, &self.params);
        let mut rng: Rng64 = seeded_rng(0);
        let mut mode = Mode {
            training: false,
            rng: &mut rng,
        };
        let out = self.forward(&mut tape, &bound, inputs, decoder, batch, &mut mode)?;
        Ok(tape.value(out.deltas).to_vec())
    }

    /// Level forecast `ŷ_t..ŷ_{t+H-1}` for one origin: un-scale the
    /// predicted differences and accumulate them from `y_{t-1}`.
    pub fn forecast(&self, sample: &Sample) -> Result<Vec<f64>> {
        if !sample.last_observed.is_finite() {
            return Err(contract("forecast needs a finite last observed value"));
        }
        let deltas = self.predict_deltas(&sample.inputs, &sample.decoder_inputs, 1)?;
        self.levels_from_deltas(&deltas, sample.last_observed)
    }

    pub fn levels_from_deltas(&self, deltas: &[f64], anchor: f64) -> Result<Vec<f64>> {
        let t = self.scaler.index(&self.target_name)?;
        let raw: Vec<f64> = deltas.iter().map(|d| self.scaler.unscale_delta(t, *d)).collect();
        Ok(inverse_difference(&raw, anchor))
    }

    pub fn gate_values(&self) -> Result<Vec<f64>> {
        gate_values(&self.params)
    }

    /// Feature indices the gate currently keeps.
    pub fn selected_features(&self) -> Result<Vec<usize>> {
        let g = self.gate_values()?;
        let k = top_k_count(g.len(), self.config.spatial.keep_fraction)?;
        select_top_k(&g, k)
    }
}
