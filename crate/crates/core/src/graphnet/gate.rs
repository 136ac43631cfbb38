use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::tensor::{Tape, Var};

pub const DEFAULT_KEEP_FRACTION: f64 = 0.10;

/// `k = ⌈p·M⌉`, guarded against representation error in `p·M`.
pub fn top_k_count(m: usize, keep_fraction: f64) -> Result<usize> {
    if !(keep_fraction > 0.0 && keep_fraction.is_finite()) {
        return Err(contract(format!("keep fraction {keep_fraction} must be positive")));
    }
    let k = (keep_fraction * m as f64 - 1e-9).ceil().max(1.0) as usize;
    if k > m {
        return Err(contract(format!("cannot keep {k} of {m} nodes")));
    }
    Ok(k)
}

/// Indices of the `k` largest values, ascending by index. Ties go to the
/// lower index.
pub fn select_top_k(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > values.len() {
        return Err(contract(format!("cannot keep {k} of {} nodes", values.len())));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// Ranks (1 = largest) of every value under the same ordering as
/// [`select_top_k`].
pub fn gate_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut rank = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    rank
}

/// Trainable logits with the selection of the latest forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateState {
    pub logits: Vec<f64>,
    pub keep_fraction: f64,
    pub last_mask: Vec<bool>,
}

impl GateState {
    pub fn new(m: usize, keep_fraction: f64) -> Self {
        Self {
            logits: vec![0.0; m],
            keep_fraction,
            last_mask: vec![false; m],
        }
    }

    pub fn k(&self) -> Result<usize> {
        top_k_count(self.logits.len(), self.keep_fraction)
    }

    pub fn gates(&self) -> Vec<f64> {
        self.logits.iter().map(|w| 1.0 / (1.0 + (-w).exp())).collect()
    }

    /// Records `logits` on the tape as a trainable leaf and gates `h`.
    pub fn forward(&mut self, tape: &mut Tape, h: Var) -> Result<(Var, Var)> {
        let logits = tape.param(&[self.logits.len()], self.logits.clone())?;
        let out = gate_forward(tape, h, logits, self.keep_fraction)?;
        self.last_mask = out.mask.clone();
        Ok((out.gated, logits))
    }
}

#[derive(Debug, Clone)]
pub struct GateOutput {
    /// `H ⊙ g̃`, same shape as the input.
    pub gated: Var,
    pub mask: Vec<bool>,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub selected: Vec<usize>,
    pub mask: Vec<bool>,
    /// `g_i` of the selected nodes, shape `[k]`.
    pub gates: Var,
}

/// Chooses the top-k nodes of `sigmoid(logits)` and exposes their gate
/// values on the tape. Unselected logits get no gradient.
pub fn gate_select(tape: &mut Tape, logits: Var, keep_fraction: f64) -> Result<Selection> {
    let m = match tape.shape(logits) {
        [m] => *m,
        s => return Err(contract(format!("gate logits must be a vector, got {s:?}"))),
    };
    let k = top_k_count(m, keep_fraction)?;
    let g = tape.sigmoid(logits);
    let selected = select_top_k(tape.value(g), k)?;
    let mut mask = vec![false; m];
    for &i in &selected {
        mask[i] = true;
    }
    let gates = tape.index_select(g, 0, &selected)?;
    Ok(Selection {
        selected,
        mask,
        gates,
    })
}

/// `Φ(H) = H ⊙ g̃` for `H: [B, M, d]`.
pub fn gate_forward(tape: &mut Tape, h: Var, logits: Var, keep_fraction: f64) -> Result<GateOutput> {
    let shape = tape.shape(h).to_vec();
    let m = tape.shape(logits).first().copied().unwrap_or(0);
    if shape.len() != 3 || shape[1] != m {
        return Err(contract(format!(
            "gate expects [B, {m}, d] node features, got {shape:?}"
        )));
    }
    let k = top_k_count(m, keep_fraction)?;
    let g = tape.sigmoid(logits);
    let selected = select_top_k(tape.value(g), k)?;
    let mut mask = vec![false; m];
    for &i in &selected {
        mask[i] = true;
    }
    let keep = tape.constant(&[m], mask.iter().map(|&b| f64::from(u8::from(b))).collect())?;
    let g_tilde = tape.mul(g, keep)?;
    let gated = tape.mul_axis(h, g_tilde, 1)?;
    Ok(GateOutput {
        gated,
        mask,
        selected,
    })
}
