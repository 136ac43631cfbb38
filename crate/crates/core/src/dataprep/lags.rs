use super::table::Frame;
use crate::error::{contract, Result};

pub const DEFAULT_MAX_LAG: usize = 6;

/// Column label for `name` shifted back `lag` weeks, e.g. `RH - Min (-1)`.
pub fn lag_name(name: &str, lag: usize) -> String {
    if lag == 0 {
        format!("{name} (0)")
    } else {
        format!("{name} (-{lag})")
    }
}

/// Splits a lagged column label back into base name and lag.
pub fn parse_lag_name(label: &str) -> Option<(&str, usize)> {
    let (base, rest) = label.rsplit_once(" (")?;
    let inner = rest.strip_suffix(')')?;
    let lag = match inner {
        "0" => 0,
        _ => inner.strip_prefix('-')?.parse().ok()?,
    };
    Some((base, lag))
}

/// Expands every column into lags `0..=max_lag` (column-major by variable,
/// lag ascending) and drops the first `max_lag` rows, where some lag is
/// undefined.
pub fn build_lags(frame: &Frame, max_lag: usize) -> Result<Frame> {
    if max_lag >= frame.len() {
        return Err(contract(format!(
            "max lag {max_lag} needs more than {} rows",
            frame.len()
        )));
    }
    let t = frame.len();
    let mut names = Vec::with_capacity(frame.width() * (max_lag + 1));
    let mut columns = Vec::with_capacity(names.capacity());
    for (name, col) in frame.names.iter().zip(&frame.columns) {
        for lag in 0..=max_lag {
            names.push(lag_name(name, lag));
            columns.push(col[max_lag - lag..t - lag].to_vec());
        }
    }
    Ok(Frame {
        weeks: frame.weeks[max_lag..].to_vec(),
        names,
        columns,
    })
}
