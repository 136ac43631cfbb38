use serde::{Deserialize, Serialize};

use super::config::TailPolicy;
use crate::dataprep::{MmwrWeek, Prepared};
use crate::error::{contract, Result};
use crate::seq2seq::ModelState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub origin_week: Option<MmwrWeek>,
    /// Canonical week index of the origin `t`.
    pub origin_index: usize,
    /// 1-based step within the horizon.
    pub step: usize,
    pub horizon: usize,
    pub y_true: Option<f64>,
    pub y_pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub horizon: usize,
    pub test_start: usize,
    pub test_end: usize,
    pub rows: Vec<ForecastRow>,
}

impl ForecastReport {
    pub fn origins(&self) -> Vec<usize> {
        let mut o: Vec<usize> = self.rows.iter().map(|r| r.origin_index).collect();
        o.dedup();
        o
    }

    /// `(predictions, actuals)` over rows with an observed actual.
    pub fn scored(&self) -> (Vec<f64>, Vec<f64>) {
        self.rows
            .iter()
            .filter_map(|r| r.y_true.map(|y| (r.y_pred, y)))
            .unzip()
    }

    pub fn scored_step(&self, step: usize) -> (Vec<f64>, Vec<f64>) {
        self.rows
            .iter()
            .filter(|r| r.step == step)
            .filter_map(|r| r.y_true.map(|y| (r.y_pred, y)))
            .unzip()
    }
}

/// Canonical origin indices in `[start, end]` under `policy`.
pub fn walk_forward_origins(start: usize, end: usize, h: usize, policy: TailPolicy) -> Vec<usize> {
    (start..=end)
        .filter(|&t| policy == TailPolicy::Truncate || t + h - 1 <= end)
        .collect()
}

/// Forecasts from every origin in the test range with fixed weights.
///
/// Each origin `t` sees only rows before `t`. Under [`TailPolicy::Skip`]
/// origins whose horizon passes `test_end` are dropped; under
/// [`TailPolicy::Truncate`] their steps beyond `test_end` are.
pub fn walk_forward(
    model: &ModelState,
    prepared: &Prepared,
    test_start: usize,
    test_end: usize,
    policy: TailPolicy,
) -> Result<ForecastReport> {
    let (w, h) = (model.config.window, model.config.horizon);
    if prepared.feature_names != model.feature_names {
        return Err(contract("prepared features differ from the model's"));
    }
    let origins = walk_forward_origins(test_start, test_end, h, policy);
    let first = *prepared
        .week_index
        .first()
        .ok_or_else(|| contract("empty prepared table"))?;
    let mut samples = Vec::with_capacity(origins.len());
    for &t in &origins {
        let row = t
            .checked_sub(first)
            .filter(|r| *r >= w)
            .ok_or_else(|| contract(format!("origin {t} lacks {w} weeks of history")))?;
        if row > prepared.len() {
            return Err(contract(format!("origin {t} lies beyond the table")));
        }
        samples.push(prepared.sample_at(row, w, h)?);
    }
    let mut rows = Vec::new();
    const CHUNK: usize = 32;
    for chunk in samples.chunks(CHUNK) {
        let mut inputs = Vec::new();
        let mut dec = Vec::new();
        for s in chunk {
            inputs.extend_from_slice(&s.inputs);
            dec.extend_from_slice(&s.decoder_inputs);
        }
        let deltas = model.predict_deltas(&inputs, &dec, chunk.len())?;
        for (s, d) in chunk.iter().zip(deltas.chunks(h)) {
            let preds = model.levels_from_deltas(d, s.last_observed)?;
            for (k, p) in preds.iter().enumerate() {
                if s.origin_index + k > test_end {
                    break;
                }
                rows.push(ForecastRow {
                    origin_week: s.origin_week,
                    origin_index: s.origin_index,
                    step: k + 1,
                    horizon: h,
                    y_true: s.actuals[k],
                    y_pred: *p,
                });
            }
        }
    }
    Ok(ForecastReport {
        horizon: h,
        test_start,
        test_end,
        rows,
    })
}
