//! Correlation graph over feature columns, the top-k feature gate, and
//! GATv2 message passing.

mod gat;
mod gate;
mod graph;
mod spatial;

pub use gat::{gatv2_attention, gatv2_layer, scatter_nodes, GatLayerParams, DEFAULT_SLOPE};
pub use gate::{
    gate_forward, gate_ranks, gate_select, select_top_k, top_k_count, GateOutput, GateState,
    Selection, DEFAULT_KEEP_FRACTION,
};
pub use graph::{build_graph, pearson_matrix, write_mask, VariableGraph, DEFAULT_THRESHOLD};
pub use spatial::{embed_step, gate_values, lift, SpatialConfig, SpatialOutput, GATE_LOGITS};
