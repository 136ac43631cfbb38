use super::table::SeriesTable;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_GAP: usize = 4;

/// Fills missing cells: linear interpolation between observed neighbours,
/// nearest-value extension at either edge. Filled cells are flagged in
/// `imputed`. Any run of missing cells longer than `max_gap` is an error.
pub fn impute(table: &SeriesTable, max_gap: usize) -> Result<SeriesTable> {
    let mut out = table.clone();
    for (m, col) in out.columns.iter_mut().enumerate() {
        let name = &table.variables[m].name;
        let observed: Vec<usize> = (0..col.len()).filter(|&t| col[t].is_some()).collect();
        if observed.is_empty() {
            if col.is_empty() {
                continue;
            }
            return Err(Error::DataQuality(format!(
                "variable {name} has no observed values"
            )));
        }
        let mut t = 0;
        while t < col.len() {
            if col[t].is_some() {
                t += 1;
                continue;
            }
            let start = t;
            while t < col.len() && col[t].is_none() {
                t += 1;
            }
            let end = t; // exclusive
            if end - start > max_gap {
                return Err(Error::DataQuality(format!(
                    "variable {name}: gap of {} weeks ({} to {}) exceeds maximum {max_gap}",
                    end - start,
                    table.weeks[start],
                    table.weeks[end - 1]
                )));
            }
            let left = start.checked_sub(1).and_then(|i| col[i]);
            let right = col.get(end).copied().flatten();
            for (k, cell) in col[start..end].iter_mut().enumerate() {
                *cell = Some(match (left, right) {
                    (Some(a), Some(b)) => {
                        let frac = (k + 1) as f64 / (end - start + 1) as f64;
                        a + (b - a) * frac
                    }
                    (Some(a), None) => a,
                    (None, Some(b)) => b,
                    (None, None) => unreachable!("column has an observed value"),
                });
            }
            out.imputed[m][start..end].iter_mut().for_each(|f| *f = true);
        }
    }
    Ok(out)
}
