use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// Pearson correlation between every pair of columns.
///
/// A constant column correlates 0 with everything else and 1 with itself.
pub fn pearson_matrix(columns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let m = columns.len();
    let t = columns.first().map_or(0, Vec::len);
    if t < 2 {
        return Err(contract("correlation needs at least 2 time points"));
    }
    if columns.iter().any(|c| c.len() != t) {
        return Err(contract("columns differ in length"));
    }
    let centred: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / t as f64;
            c.iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centred
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut rho = vec![vec![0.0; m]; m];
    for u in 0..m {
        rho[u][u] = 1.0;
        for v in u + 1..m {
            let r = if norms[u] == 0.0 || norms[v] == 0.0 {
                0.0
            } else {
                let dot: f64 = centred[u].iter().zip(&centred[v]).map(|(a, b)| a * b).sum();
                (dot / (norms[u] * norms[v])).clamp(-1.0, 1.0)
            };
            rho[u][v] = r;
            rho[v][u] = r;
        }
    }
    Ok(rho)
}

/// Thresholded absolute-correlation graph over feature columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableGraph {
    pub node_names: Vec<String>,
    /// Row-major `M × M`.
    pub weights: Vec<f64>,
    pub neighborhoods: Vec<Vec<usize>>,
    pub threshold: f64,
}

/// `a_uv = |ρ_uv|` when `|ρ_uv| >= threshold`, else 0.
pub fn build_graph(names: &[String], rho: &[Vec<f64>], threshold: f64) -> Result<VariableGraph> {
    let m = names.len();
    if rho.len() != m || rho.iter().any(|r| r.len() != m) {
        return Err(contract(format!("correlation matrix is not {m}x{m}")));
    }
    let mut weights = vec![0.0; m * m];
    for u in 0..m {
        for v in 0..m {
            let a = rho[u][v].abs();
            if a >= threshold {
                weights[u * m + v] = a;
            }
        }
    }
    VariableGraph::from_weights(names.to_vec(), weights, threshold)
}

impl VariableGraph {
    pub fn from_weights(node_names: Vec<String>, weights: Vec<f64>, threshold: f64) -> Result<Self> {
        let m = node_names.len();
        if weights.len() != m * m {
            return Err(contract("weight matrix size does not match node count"));
        }
        for u in 0..m {
            if weights[u * m + u] <= 0.0 {
                return Err(contract(format!("node {} lacks a self-loop", node_names[u])));
            }
            for v in 0..u {
                if weights[u * m + v] != weights[v * m + u] {
                    return Err(contract("weight matrix is not symmetric"));
                }
            }
        }
        let neighborhoods = (0..m)
            .map(|u| (0..m).filter(|&v| weights[u * m + v] > 0.0).collect())
            .collect();
        Ok(Self {
            node_names,
            weights,
            neighborhoods,
            threshold,
        })
    }

    pub fn len(&self) -> usize {
        self.node_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_names.is_empty()
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.weights[u * self.len() + v]
    }

    /// Adjacency mask (`k × k`, row-major) of the subgraph induced by `nodes`.
    pub fn induced_mask(&self, nodes: &[usize]) -> Vec<bool> {
        let mut mask = Vec::with_capacity(nodes.len() * nodes.len());
        for &u in nodes {
            for &v in nodes {
                mask.push(self.weight(u, v) > 0.0);
            }
        }
        mask
    }

    /// Undirected edges `(u, v, weight)` with `u <= v`, self-loops included.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let m = self.len();
        let mut out = Vec::new();
        for u in 0..m {
            for v in u..m {
                let w = self.weight(u, v);
                if w > 0.0 {
                    out.push((u, v, w));
                }
            }
        }
        out
    }

    pub fn from_edges(
        node_names: Vec<String>,
        edges: &[(usize, usize, f64)],
        threshold: f64,
    ) -> Result<Self> {
        let m = node_names.len();
        let mut weights = vec![0.0; m * m];
        for &(u, v, w) in edges {
            if u >= m || v >= m {
                return Err(contract(format!("edge ({u}, {v}) outside {m} nodes")));
            }
            weights[u * m + v] = w;
            weights[v * m + u] = w;
        }
        Self::from_weights(node_names, weights, threshold)
    }

    /// Edge list as `u_name,v_name,weight` rows.
    pub fn write_edges<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["u_name", "v_name", "weight"])?;
        for (u, v, w) in self.edges() {
            wtr.write_record([
                self.node_names[u].as_str(),
                self.node_names[v].as_str(),
                &format!("{w:?}"),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Selected-feature mask as `name,gate_value,selected` rows.
pub fn write_mask<W: Write>(names: &[String], gates: &[f64], mask: &[bool], out: W) -> Result<()> {
    if names.len() != gates.len() || names.len() != mask.len() {
        return Err(contract("mask export needs one gate and flag per name"));
    }
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["name", "gate_value", "selected"])?;
    for ((n, g), s) in names.iter().zip(gates).zip(mask) {
        wtr.write_record([n.as_str(), &format!("{g:?}"), if *s { "1" } else { "0" }])?;
    }
    wtr.flush()?;
    Ok(())
}
