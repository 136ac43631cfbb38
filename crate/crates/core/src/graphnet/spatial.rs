use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gat::{gatv2_layer, GatLayerParams, DEFAULT_SLOPE};
use super::gate::{gate_select, Selection, DEFAULT_KEEP_FRACTION};
use super::graph::VariableGraph;
use crate::error::{contract, Result};
use crate::tensor::{xavier_uniform, zeros_param, Bound, ParamMap, Tape, Tensor, Var};

/// Gate, scalar lift, GATv2 stack and node pooling that turn the `M`
/// feature values of one week into a `d_model` vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialConfig {
    pub d_node: usize,
    pub gat_layers: usize,
    pub gat_heads: usize,
    pub slope: f64,
    pub keep_fraction: f64,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self {
            d_node: 16,
            gat_layers: 2,
            gat_heads: 4,
            slope: DEFAULT_SLOPE,
            keep_fraction: DEFAULT_KEEP_FRACTION,
        }
    }
}

pub const GATE_LOGITS: &str = "gate.logits";

#[derive(Debug, Clone)]
pub struct SpatialOutput {
    /// `[S, d_model]`, one row per input row.
    pub z: Var,
    pub selection: Selection,
    /// Node states after the last GAT layer, `[S, k, d_node]`.
    pub nodes: Var,
}

impl SpatialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_node == 0 || self.gat_heads == 0 || self.d_node % self.gat_heads != 0 {
            return Err(contract(format!(
                "d_node {} must be a positive multiple of gat_heads {}",
                self.d_node, self.gat_heads
            )));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(contract("keep_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_node / self.gat_heads
    }

    pub fn init<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        m: usize,
        d_model: usize,
        params: &mut ParamMap,
    ) -> Result<()> {
        self.validate()?;
        let dn = self.d_node;
        params.insert(GATE_LOGITS.into(), zeros_param(&[m]));
        params.insert("lift.weight".into(), xavier_uniform(rng, &[1, dn], 1, dn));
        params.insert("lift.bias".into(), zeros_param(&[dn]));
        for l in 0..self.gat_layers {
            params.insert(format!("gat{l}.w1"), xavier_uniform(rng, &[dn, dn], dn, dn));
            params.insert(format!("gat{l}.w2"), xavier_uniform(rng, &[dn, dn], dn, dn));
            let (h, d) = (self.gat_heads, self.d_head());
            params.insert(format!("gat{l}.att"), xavier_uniform(rng, &[h, d], d, 1));
        }
        params.insert(
            "embed.weight".into(),
            xavier_uniform(rng, &[dn, d_model], dn, d_model),
        );
        params.insert("embed.bias".into(), zeros_param(&[d_model]));
        Ok(())
    }

    pub fn layer(&self, bound: &Bound, l: usize) -> Result<GatLayerParams> {
        Ok(GatLayerParams {
            w1: bound.get(&format!("gat{l}.w1"))?,
            w2: bound.get(&format!("gat{l}.w2"))?,
            att: bound.get(&format!("gat{l}.att"))?,
            heads: self.gat_heads,
            d_head: self.d_head(),
            slope: self.slope,
        })
    }

    /// `x: [S, M]` scaled feature rows.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        x: Var,
        graph: &VariableGraph,
    ) -> Result<SpatialOutput> {
        let (s, m) = match tape.shape(x) {
            [s, m] => (*s, *m),
            other => return Err(contract(format!("spatial input must be [S, M], got {other:?}"))),
        };
        if m != graph.len() {
            return Err(contract(format!(
                "{m} feature columns but the graph has {} nodes",
                graph.len()
            )));
        }
        let selection = gate_select(tape, bound.get(GATE_LOGITS)?, self.keep_fraction)?;
        let k = selection.selected.len();
        let x_sel = tape.index_select(x, 1, &selection.selected)?;
        let x_sel = tape.reshape(x_sel, &[s, k, 1])?;
        let h = lift(tape, x_sel, bound.get("lift.weight")?, bound.get("lift.bias")?)?;
        let mut h = tape.mul_axis(h, selection.gates, 1)?;
        let mask = graph.induced_mask(&selection.selected);
        for l in 0..self.gat_layers {
            let p = self.layer(bound, l)?;
            h = gatv2_layer(tape, h, &mask, &p)?;
        }
        let z = embed_step(tape, h, bound.get("embed.weight")?, bound.get("embed.bias")?)?;
        Ok(SpatialOutput {
            z,
            selection,
            nodes: h,
        })
    }
}

/// Shared scalar embedding `x·e + b`: `[S, n, 1] -> [S, n, d]`.
pub fn lift(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let h = tape.matmul(x, weight)?;
    tape.add(h, bias)
}

/// Mean over nodes followed by a linear map: `[S, n, D] -> [S, d_model]`.
pub fn embed_step(tape: &mut Tape, h: Var, weight: Var, bias: Var) -> Result<Var> {
    let pooled = tape.mean_axis(h, 1)?;
    let z = tape.matmul(pooled, weight)?;
    tape.add(z, bias)
}

/// Gate values `sigmoid(w)` of a parameter map.
pub fn gate_values(params: &ParamMap) -> Result<Vec<f64>> {
    let t: &Tensor = params
        .get(GATE_LOGITS)
        .ok_or_else(|| contract("parameters lack gate logits"))?;
    Ok(t.data().iter().map(|w| 1.0 / (1.0 + (-w).exp())).collect())
}
