use crate::error::{contract, Result};
use crate::tensor::{Tape, Var};

pub const DEFAULT_SLOPE: f64 = 0.2;

/// One GATv2 layer. `w1` transforms the receiving node, `w2` the sending
/// node (and its message); both are `[d_in, heads·d_head]`. `att` is
/// `[heads, d_head]`.
#[derive(Debug, Clone, Copy)]
pub struct GatLayerParams {
    pub w1: Var,
    pub w2: Var,
    pub att: Var,
    pub heads: usize,
    pub d_head: usize,
    pub slope: f64,
}

impl GatLayerParams {
    fn check(&self, tape: &Tape, h: Var, mask: &[bool]) -> Result<(usize, usize, usize)> {
        let s = tape.shape(h);
        let width = self.heads * self.d_head;
        if s.len() != 3 {
            return Err(contract(format!("GAT input must be [B, n, d], got {s:?}")));
        }
        let (b, n, d) = (s[0], s[1], s[2]);
        if tape.shape(self.w1) != [d, width] || tape.shape(self.w2) != [d, width] {
            return Err(contract(format!(
                "GAT weights {:?} / {:?} do not map {d} to {width}",
                tape.shape(self.w1),
                tape.shape(self.w2)
            )));
        }
        if tape.shape(self.att) != [self.heads, self.d_head] {
            return Err(contract("GAT attention vector shape mismatch"));
        }
        if mask.len() != n * n {
            return Err(contract(format!("adjacency mask is not {n}x{n}")));
        }
        Ok((b, n, d))
    }
}

struct Projected {
    alpha: Var,
    messages: Var,
}

fn project(tape: &mut Tape, h: Var, mask: &[bool], p: &GatLayerParams) -> Result<Projected> {
    let (b, n, _) = p.check(tape, h, mask)?;
    let (ha, dh) = (p.heads, p.d_head);
    let recv = tape.matmul(h, p.w1)?;
    let send = tape.matmul(h, p.w2)?;
    // e[b, i, j, :] = W1 h_i + W2 h_j
    let e = tape.pairwise_add(recv, send)?;
    let e = tape.leaky_relu(e, p.slope);
    let att = tape.reshape(p.att, &[ha * dh])?;
    let scored = tape.mul(e, att)?;
    let scored = tape.reshape(scored, &[b, n, n, ha, dh])?;
    let logits = tape.sum_axis(scored, 4)?;
    let logits = tape.permute(logits, &[0, 3, 1, 2])?;
    let alpha = tape.masked_softmax(logits, mask)?;
    let messages = tape.reshape(send, &[b, n, ha, dh])?;
    let messages = tape.permute(messages, &[0, 2, 1, 3])?;
    Ok(Projected { alpha, messages })
}

/// Attention coefficients `[B, heads, n, n]`; row `i` is a softmax over the
/// neighbours of `i` given by the row-major `n × n` `mask`.
pub fn gatv2_attention(tape: &mut Tape, h: Var, mask: &[bool], p: &GatLayerParams) -> Result<Var> {
    Ok(project(tape, h, mask, p)?.alpha)
}

/// `h_i' = ‖_k ReLU(Σ_j α_ij^k W2^k h_j)` for `h: [B, n, d]`, returning
/// `[B, n, heads·d_head]`.
pub fn gatv2_layer(tape: &mut Tape, h: Var, mask: &[bool], p: &GatLayerParams) -> Result<Var> {
    let b = tape.shape(h)[0];
    let n = tape.shape(h).get(1).copied().unwrap_or(0);
    let pr = project(tape, h, mask, p)?;
    let agg = tape.matmul(pr.alpha, pr.messages)?;
    let agg = tape.relu(agg);
    let agg = tape.permute(agg, &[0, 2, 1, 3])?;
    tape.reshape(agg, &[b, n, p.heads * p.d_head])
}

/// Places the rows of `sub: [B, k, D]` at node positions `selected` of an
/// otherwise zero `[B, m, D]` tensor.
pub fn scatter_nodes(tape: &mut Tape, sub: Var, selected: &[usize], m: usize) -> Result<Var> {
    let s = tape.shape(sub).to_vec();
    if s.len() != 3 || s[1] != selected.len() || selected.iter().any(|&i| i >= m) {
        return Err(contract("scatter_nodes: selection does not match input"));
    }
    let k = selected.len();
    let mut place = vec![0.0; k * m];
    for (j, &i) in selected.iter().enumerate() {
        place[j * m + i] = 1.0;
    }
    let place = tape.constant(&[k, m], place)?;
    let t = tape.permute(sub, &[0, 2, 1])?;
    let t = tape.matmul(t, place)?;
    tape.permute(t, &[0, 2, 1])
}
