use crate::error::{contract, Result};

/// First differences `y[t] - y[t-1]`; one element shorter than `y`.
pub fn difference(y: &[f64]) -> Result<Vec<f64>> {
    if y.len() < 2 {
        return Err(contract(format!(
            "differencing needs at least 2 points, got {}",
            y.len()
        )));
    }
    Ok(y.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Rebuilds levels from predicted differences anchored at the last observed
/// level: each reconstructed value feeds the next step.
pub fn inverse_difference(deltas: &[f64], anchor: f64) -> Vec<f64> {
    let mut level = anchor;
    deltas
        .iter()
        .map(|d| {
            level += d;
            level
        })
        .collect()
}
