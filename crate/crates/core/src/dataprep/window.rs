use serde::{Deserialize, Serialize};

use super::difference::difference;
use super::lags::build_lags;
use super::mmwr::MmwrWeek;
use super::scaler::{fit_scaler, ScalerState};
use super::table::Frame;
use crate::error::{contract, Result};

/// How a canonical table becomes model-ready series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub target: String,
    pub max_lag: usize,
    /// Last canonical week index (1-based, inclusive) of the training split.
    pub train_end: usize,
    /// Also expose the target's own lags as graph nodes.
    pub target_as_feature: bool,
}

/// Lagged, scaled features with the raw and scaled-differenced target, one
/// row per week. Row `r` sits at canonical week index `week_index[r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prepared {
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub weeks: Vec<MmwrWeek>,
    pub week_index: Vec<usize>,
    /// Row-major `[rows × features]`, min-max scaled.
    pub features: Vec<f64>,
    /// Raw target level.
    pub target: Vec<f64>,
    /// `scaled(y[r]) - scaled(y[r-1])`.
    pub target_delta: Vec<f64>,
    pub scaler: ScalerState,
}

impl Prepared {
    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature(&self, row: usize, col: usize) -> f64 {
        self.features[row * self.n_features() + col]
    }

    /// Row holding canonical week index `index`, if present.
    pub fn row_of(&self, index: usize) -> Option<usize> {
        let first = *self.week_index.first()?;
        let r = index.checked_sub(first)?;
        (r < self.len()).then_some(r)
    }

    /// Rows whose week index is within the training split.
    pub fn train_rows(&self, train_end: usize) -> usize {
        self.week_index.iter().filter(|&&i| i <= train_end).count()
    }

    /// Column-major copy of the training rows, for correlation analysis.
    pub fn train_columns(&self, train_end: usize) -> Vec<Vec<f64>> {
        let rows = self.train_rows(train_end);
        (0..self.n_features())
            .map(|c| (0..rows).map(|r| self.feature(r, c)).collect())
            .collect()
    }

    pub fn target_scale_index(&self) -> Result<usize> {
        self.scaler.index(&self.target_name)
    }

    /// Converts a scaled difference back to target units.
    pub fn unscale_delta(&self, d: f64) -> Result<f64> {
        Ok(self.scaler.unscale_delta(self.target_scale_index()?, d))
    }

    /// Model inputs for the forecast origin at row `origin` with window `w`
    /// and horizon `h`. Only rows `< origin` feed the inputs; `actuals`
    /// holds the observed levels for `origin..origin+h` where available.
    pub fn sample_at(&self, origin: usize, w: usize, h: usize) -> Result<Sample> {
        if origin < w || origin > self.len() {
            return Err(contract(format!(
                "origin row {origin} needs {w} preceding rows within {} rows",
                self.len()
            )));
        }
        let m = self.n_features();
        let inputs = self.features[(origin - w) * m..origin * m].to_vec();
        let decoder_inputs = self.target_delta[origin - w..origin].to_vec();
        let actuals = (origin..origin + h).map(|r| self.target.get(r).copied()).collect();
        let targets = (origin..origin + h)
            .map(|r| self.target_delta.get(r).copied())
            .collect();
        Ok(Sample {
            origin_row: origin,
            origin_index: self.week_index[origin - 1] + 1,
            origin_week: self.weeks.get(origin).copied(),
            inputs,
            decoder_inputs,
            last_observed: self.target[origin - 1],
            actuals,
            targets,
        })
    }
}

/// One forecast origin: everything known strictly before it, plus whatever
/// lies after it for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub origin_row: usize,
    pub origin_index: usize,
    pub origin_week: Option<MmwrWeek>,
    pub inputs: Vec<f64>,
    pub decoder_inputs: Vec<f64>,
    pub last_observed: f64,
    pub actuals: Vec<Option<f64>>,
    pub targets: Vec<Option<f64>>,
}

/// Turns a canonical table into lagged, scaled, differenced series.
///
/// Predictors are every column except the target. The scaler is fitted on
/// rows with canonical index `<= train_end` only.
pub fn prepare(frame: &Frame, cfg: &PrepareConfig) -> Result<Prepared> {
    let target_col = frame
        .position(&cfg.target)
        .ok_or_else(|| contract(format!("target column {:?} not in table", cfg.target)))?;
    let predictors: Vec<usize> = (0..frame.width())
        .filter(|&i| cfg.target_as_feature || i != target_col)
        .collect();
    if predictors.is_empty() {
        return Err(contract("table has no predictor columns"));
    }
    let lagged = build_lags(&frame.select(&predictors), cfg.max_lag)?;
    let mut joint = lagged.clone();
    joint.names.push(cfg.target.clone());
    joint
        .columns
        .push(frame.columns[target_col][cfg.max_lag..].to_vec());

    // lagged row r is canonical index r + max_lag + 1
    let train_rows = cfg.train_end.saturating_sub(cfg.max_lag).min(joint.len());
    let scaler = fit_scaler(&joint, train_rows)?;
    let t_idx = joint.width() - 1;
    let y_raw = &joint.columns[t_idx];
    let y_scaled = scaler.scale_column(t_idx, y_raw);
    let delta = difference(&y_scaled)?;

    let rows = joint.len() - 1;
    let m = lagged.width();
    let mut features = Vec::with_capacity(rows * m);
    for r in 1..joint.len() {
        for c in 0..m {
            features.push(scaler.scale_value(c, lagged.columns[c][r]));
        }
    }
    let offset = cfg.max_lag + 1;
    Ok(Prepared {
        feature_names: lagged.names.clone(),
        target_name: cfg.target.clone(),
        weeks: joint.weeks[1..].to_vec(),
        week_index: (0..rows).map(|r| r + offset + 1).collect(),
        features,
        target: y_raw[1..].to_vec(),
        target_delta: delta,
        scaler,
    })
}

/// Sliding-window training pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub window: usize,
    pub horizon: usize,
    pub n_features: usize,
    /// `[N × w × M]`
    pub inputs: Vec<f64>,
    /// `[N × w]` differenced target history.
    pub decoder_inputs: Vec<f64>,
    /// `[N × H]` differenced target future.
    pub targets: Vec<f64>,
    pub origins: Vec<MmwrWeek>,
    /// Canonical week index of each origin.
    pub origin_index: Vec<usize>,
    /// Raw `y[t-1]` per sample.
    pub last_observed: Vec<f64>,
    /// `[N × H]` raw target levels.
    pub actuals: Vec<f64>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn sample_inputs(&self, i: usize) -> &[f64] {
        let s = self.window * self.n_features;
        &self.inputs[i * s..(i + 1) * s]
    }

    pub fn sample_decoder(&self, i: usize) -> &[f64] {
        &self.decoder_inputs[i * self.window..(i + 1) * self.window]
    }

    pub fn sample_targets(&self, i: usize) -> &[f64] {
        &self.targets[i * self.horizon..(i + 1) * self.horizon]
    }

    pub fn sample_actuals(&self, i: usize) -> &[f64] {
        &self.actuals[i * self.horizon..(i + 1) * self.horizon]
    }

    /// Samples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> WindowedDataset {
        let mut out = WindowedDataset {
            window: self.window,
            horizon: self.horizon,
            n_features: self.n_features,
            inputs: Vec::new(),
            decoder_inputs: Vec::new(),
            targets: Vec::new(),
            origins: Vec::new(),
            origin_index: Vec::new(),
            last_observed: Vec::new(),
            actuals: Vec::new(),
        };
        for &i in idx {
            out.inputs.extend_from_slice(self.sample_inputs(i));
            out.decoder_inputs.extend_from_slice(self.sample_decoder(i));
            out.targets.extend_from_slice(self.sample_targets(i));
            out.origins.push(self.origins[i]);
            out.origin_index.push(self.origin_index[i]);
            out.last_observed.push(self.last_observed[i]);
            out.actuals.extend_from_slice(self.sample_actuals(i));
        }
        out
    }
}

/// Every complete `(w inputs, h targets)` pair at the given stride:
/// `N = (T - w - h) / stride + 1` samples.
pub fn window(prepared: &Prepared, w: usize, h: usize, stride: usize) -> Result<WindowedDataset> {
    if w == 0 || h == 0 || stride == 0 {
        return Err(contract("window, horizon and stride must be positive"));
    }
    let t = prepared.len();
    if t < w + h {
        return Err(contract(format!(
            "{t} rows cannot hold a window of {w} plus horizon {h}"
        )));
    }
    let mut ds = WindowedDataset {
        window: w,
        horizon: h,
        n_features: prepared.n_features(),
        inputs: Vec::new(),
        decoder_inputs: Vec::new(),
        targets: Vec::new(),
        origins: Vec::new(),
        origin_index: Vec::new(),
        last_observed: Vec::new(),
        actuals: Vec::new(),
    };
    let mut origin = w;
    while origin + h <= t {
        let s = prepared.sample_at(origin, w, h)?;
        ds.inputs.extend(s.inputs);
        ds.decoder_inputs.extend(s.decoder_inputs);
        ds.targets.extend(s.targets.into_iter().map(|v| v.expect("complete window")));
        ds.actuals.extend(s.actuals.into_iter().map(|v| v.expect("complete window")));
        ds.origins.push(prepared.weeks[origin]);
        ds.origin_index.push(prepared.week_index[origin]);
        ds.last_observed.push(s.last_observed);
        origin += stride;
    }
    Ok(ds)
}
