use serde::{Deserialize, Serialize};

use super::table::Frame;
use crate::error::{contract, Result};

/// Per-column min/max learned on the training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Fits min/max over the first `train_rows` rows of every column.
pub fn fit_scaler(frame: &Frame, train_rows: usize) -> Result<ScalerState> {
    if train_rows == 0 {
        return Err(contract("empty training split for scaler"));
    }
    if train_rows > frame.len() {
        return Err(contract(format!(
            "training split of {train_rows} rows exceeds table length {}",
            frame.len()
        )));
    }
    let mut min = Vec::with_capacity(frame.width());
    let mut max = Vec::with_capacity(frame.width());
    for col in &frame.columns {
        let train = &col[..train_rows];
        min.push(train.iter().copied().fold(f64::INFINITY, f64::min));
        max.push(train.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(ScalerState {
        names: frame.names.clone(),
        min,
        max,
    })
}

impl ScalerState {
    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| contract(format!("scaler has no entry for {name:?}")))
    }

    pub fn range(&self, i: usize) -> f64 {
        self.max[i] - self.min[i]
    }

    /// `(x - min) / (max - min)`; a constant training column maps to 0.
    /// No clipping: test values may leave `[0, 1]`.
    pub fn scale_value(&self, i: usize, x: f64) -> f64 {
        let r = self.range(i);
        if r > 0.0 {
            (x - self.min[i]) / r
        } else {
            0.0
        }
    }

    pub fn unscale_value(&self, i: usize, s: f64) -> f64 {
        self.min[i] + s * self.range(i)
    }

    /// Converts a scaled *difference* back to original units.
    pub fn unscale_delta(&self, i: usize, d: f64) -> f64 {
        d * self.range(i)
    }

    pub fn scale_column(&self, i: usize, col: &[f64]) -> Vec<f64> {
        col.iter().map(|&x| self.scale_value(i, x)).collect()
    }
}

pub fn apply_scaler(frame: &Frame, state: &ScalerState) -> Result<Frame> {
    if frame.names != state.names {
        return Err(contract("scaler columns do not match table columns"));
    }
    for (i, name) in state.names.iter().enumerate() {
        if state.range(i) <= 0.0 {
            log::warn!("column {name} is constant on the training split; scaled to 0");
        }
    }
    Ok(Frame {
        weeks: frame.weeks.clone(),
        names: frame.names.clone(),
        columns: frame
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| state.scale_column(i, c))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataprep::mmwr::{week_range, MmwrWeek};

    fn frame(cols: Vec<Vec<f64>>) -> Frame {
        let first = MmwrWeek::new(2010, 1).unwrap();
        let mut last = first;
        for _ in 1..cols[0].len() {
            last = last.next();
        }
        Frame {
            weeks: week_range(first, last),
            names: (0..cols.len()).map(|i| format!("c{i}")).collect(),
            columns: cols,
        }
    }

    #[test]
    fn affine_map_uses_training_rows_only() {
        let f = frame(vec![vec![0.0, 10.0, 5.0, 12.0], vec![3.0, 3.0, 3.0, 9.0]]);
        let s = fit_scaler(&f, 2).unwrap();
        assert_eq!((s.min[0], s.max[0]), (0.0, 10.0));
        let out = apply_scaler(&f, &s).unwrap();
        assert_eq!(out.columns[0], vec![0.0, 1.0, 0.5, 1.2]);
        assert_eq!(out.columns[1], vec![0.0; 4]);
    }

    #[test]
    fn empty_or_oversized_split_rejected() {
        let f = frame(vec![vec![1.0, 2.0]]);
        assert!(fit_scaler(&f, 0).is_err());
        assert!(fit_scaler(&f, 3).is_err());
    }
}
