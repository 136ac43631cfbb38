//! Finite-difference gradient checks of every layer type on a tiny model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, ModelState};
use super::transformer::{Mode, TransformerConfig};
use crate::dataprep::ScalerState;
use crate::error::Result;
use crate::graphnet::{SpatialConfig, VariableGraph, DEFAULT_SLOPE, GATE_LOGITS};
use crate::tensor::{grad_check, seeded_rng, stream_rng, Bound, GradCheckReport, ParamMap, Tape, Tensor};

pub const CHECK_EPSILON: f64 = 1e-5;
pub const CHECK_TOLERANCE: f64 = 1e-4;

/// Layer groups checked, with the parameter-name prefixes each covers.
pub const LAYER_GROUPS: [(&str, &[&str]); 5] = [
    ("gate", &[GATE_LOGITS]),
    ("gatv2", &["lift.", "gat0."]),
    ("encoder", &["embed.", "enc"]),
    ("decoder", &["dec"]),
    ("head", &["head."]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    pub layer: String,
    pub report: GradCheckReport,
}

impl LayerCheck {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

/// Small randomly initialised model over six features, with distinct gate
/// logits so the top-k choice is stable under perturbation.
pub fn tiny_model(seed: u64) -> Result<ModelState> {
    let m = 6;
    let config = ModelConfig {
        spatial: SpatialConfig {
            d_node: 4,
            gat_layers: 1,
            gat_heads: 2,
            slope: DEFAULT_SLOPE,
            keep_fraction: 0.5,
        },
        transformer: TransformerConfig {
            d_model: 4,
            n_heads: 2,
            d_ff: 5,
            dropout: 0.0,
            encoder_layers: 1,
            decoder_layers: 1,
        },
        window: 3,
        horizon: 2,
    };
    config.validate()?;
    let names: Vec<String> = (0..m).map(|i| format!("x{i} (0)")).collect();
    let mut weights = vec![0.0; m * m];
    for u in 0..m {
        weights[u * m + u] = 1.0;
        for v in 0..m {
            if u != v && (u + v) % 3 != 0 {
                weights[u * m + v] = 0.5;
            }
        }
    }
    let graph = VariableGraph::from_weights(names.clone(), weights, 0.05)?;
    let mut rng = stream_rng(seed, 1);
    let mut params = ParamMap::new();
    config.spatial.init(&mut rng, m, config.transformer.d_model, &mut params)?;
    config.transformer.init(&mut rng, &mut params)?;
    for (name, t) in params.iter_mut() {
        if name.ends_with(".bias") || name.ends_with(".gain") {
            for v in t.data_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
    }
    let logits: Vec<f64> = (0..m).map(|i| 0.4 * i as f64 - 1.0).collect();
    params.insert(GATE_LOGITS.to_string(), Tensor::param(&[m], logits)?);
    Ok(ModelState {
        config,
        params,
        graph,
        feature_names: names,
        target_name: "cases".into(),
        scaler: ScalerState {
            names: vec!["cases".into()],
            min: vec![0.0],
            max: vec![1.0],
        },
        seed,
    })
}

/// Checks the gradient of a weighted sum of a tiny model's predictions
/// against central differences, one report per layer group.
pub fn layer_grad_checks(seed: u64) -> Result<Vec<LayerCheck>> {
    let model = tiny_model(seed)?;
    let (batch, w, m) = (2, model.config.window, model.n_features());
    let mut rng = seeded_rng(seed ^ 0x5eed);
    let inputs: Vec<f64> = (0..batch * w * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let decoder: Vec<f64> = (0..batch * w).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let out_w: Vec<f64> = (0..batch * model.config.horizon)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let names: Vec<String> = model.params.keys().cloned().collect();

    let mut checks = Vec::new();
    for (layer, prefixes) in LAYER_GROUPS {
        let inputs_named: Vec<(String, Tensor)> = model
            .params
            .iter()
            .map(|(k, t)| {
                let mut t = t.clone();
                t.requires_grad = prefixes.iter().any(|p| k.starts_with(p));
                (k.clone(), t)
            })
            .collect();
        let report = grad_check(
            |tape: &mut Tape, vars| {
                let bound: Bound = names.iter().cloned().zip(vars.iter().copied()).collect();
                let mut drop_rng = seeded_rng(0);
                let mut mode = Mode {
                    training: false,
                    rng: &mut drop_rng,
                };
                let out = model.forward(tape, &bound, &inputs, &decoder, batch, &mut mode)?;
                let wv = tape.constant(&[batch, model.config.horizon], out_w.clone())?;
                let p = tape.mul(out.deltas, wv)?;
                Ok(tape.sum(p))
            },
            &inputs_named,
            CHECK_EPSILON,
            CHECK_TOLERANCE,
        )?;
        checks.push(LayerCheck {
            layer: layer.to_string(),
            report,
        });
    }
    Ok(checks)
}
