//! Self-describing JSON checkpoints. Parameter values are stored as the hex
//! of their little-endian IEEE-754 bytes so that reloads are bit-exact.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, ModelState};
use crate::dataprep::ScalerState;
use crate::error::{contract, Result};
use crate::graphnet::VariableGraph;
use crate::tensor::{ParamMap, Tensor};

pub const FORMAT_TAG: &str = "epigraph-checkpoint/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    values: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphRecord {
    threshold: f64,
    edges: Vec<(usize, usize, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    seed: u64,
    config: ModelConfig,
    /// Free-form echo of the run configuration.
    run_config: serde_json::Value,
    target: String,
    features: Vec<String>,
    scaler: ScalerRecord,
    graph: GraphRecord,
    parameters: Vec<ParamRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScalerRecord {
    names: Vec<String>,
    min: String,
    max: String,
}

fn encode(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    hex::encode(bytes)
}

fn decode(s: &str) -> Result<Vec<f64>> {
    let bytes = hex::decode(s).map_err(|e| contract(format!("bad hex in checkpoint: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(contract("checkpoint value block is not a whole number of f64"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

impl ModelState {
    pub fn write_checkpoint<W: Write>(&self, out: W, run_config: &serde_json::Value) -> Result<()> {
        let file = CheckpointFile {
            format: FORMAT_TAG.to_string(),
            seed: self.seed,
            config: self.config.clone(),
            run_config: run_config.clone(),
            target: self.target_name.clone(),
            features: self.feature_names.clone(),
            scaler: ScalerRecord {
                names: self.scaler.names.clone(),
                min: encode(&self.scaler.min),
                max: encode(&self.scaler.max),
            },
            graph: GraphRecord {
                threshold: self.graph.threshold,
                edges: self
                    .graph
                    .edges()
                    .into_iter()
                    .map(|(u, v, w)| (u, v, encode(&[w])))
                    .collect(),
            },
            parameters: self
                .params
                .iter()
                .map(|(name, t)| ParamRecord {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    values: encode(t.data()),
                })
                .collect(),
        };
        serde_json::to_writer_pretty(out, &file)?;
        Ok(())
    }

    /// Returns the model and the echoed run configuration.
    pub fn read_checkpoint<R: Read>(src: R) -> Result<(Self, serde_json::Value)> {
        let file: CheckpointFile = serde_json::from_reader(src)?;
        if file.format != FORMAT_TAG {
            return Err(contract(format!(
                "unsupported checkpoint format {:?} (expected {FORMAT_TAG})",
                file.format
            )));
        }
        let mut params = ParamMap::new();
        for p in file.parameters {
            params.insert(p.name, Tensor::param(&p.shape, decode(&p.values)?)?);
        }
        let edges = file
            .graph
            .edges
            .iter()
            .map(|(u, v, w)| Ok((*u, *v, decode(w)?.first().copied().unwrap_or(0.0))))
            .collect::<Result<Vec<_>>>()?;
        let graph = VariableGraph::from_edges(file.features.clone(), &edges, file.graph.threshold)?;
        let scaler = ScalerState {
            names: file.scaler.names,
            min: decode(&file.scaler.min)?,
            max: decode(&file.scaler.max)?,
        };
        let model = ModelState {
            config: file.config,
            params,
            graph,
            feature_names: file.features,
            target_name: file.target,
            scaler,
            seed: file.seed,
        };
        model.config.validate()?;
        Ok((model, file.run_config))
    }
}
