use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub mape: f64,
    pub mae: f64,
    pub mse: f64,
    pub rse: f64,
    /// `Σ(ŷ − y)²`
    pub rse_numerator: f64,
    /// `Σ(y − ȳ)²`
    pub rse_denominator: f64,
    /// Terms left out of MAPE because `y == 0`.
    pub zero_actuals: usize,
}

/// MAPE, MAE, MSE and RSE over aligned predictions and actuals.
///
/// MAPE skips zero actuals (and is NaN when every actual is zero). RSE is
/// `sqrt(Σ(ŷ−y)² / Σ(y−ȳ)²)` with `ȳ` the mean of `actual`.
pub fn metrics(pred: &[f64], actual: &[f64]) -> Result<MetricsReport> {
    if pred.len() != actual.len() {
        return Err(contract(format!(
            "{} predictions for {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(contract("metrics over no values"));
    }
    let n = pred.len() as f64;
    let mean_y = actual.iter().sum::<f64>() / n;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut pct = 0.0;
    let mut pct_n = 0usize;
    let mut dev = 0.0;
    for (p, y) in pred.iter().zip(actual) {
        let e = p - y;
        abs += e.abs();
        sq += e * e;
        dev += (y - mean_y) * (y - mean_y);
        if *y != 0.0 {
            pct += e.abs() / y.abs();
            pct_n += 1;
        }
    }
    let rse = if dev > 0.0 {
        (sq / dev).sqrt()
    } else if sq == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(MetricsReport {
        n: pred.len(),
        mape: if pct_n > 0 { pct / pct_n as f64 } else { f64::NAN },
        mae: abs / n,
        mse: sq / n,
        rse,
        rse_numerator: sq,
        rse_denominator: dev,
        zero_actuals: pred.len() - pct_n,
    })
}
