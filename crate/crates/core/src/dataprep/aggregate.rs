use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::mmwr::{mmwr_week_of, week_range, MmwrWeek};
use super::table::Aggregation;
use crate::error::Result;

/// One value per MMWR week, with the number of daily observations behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklySeries {
    pub weeks: Vec<MmwrWeek>,
    pub values: Vec<Option<f64>>,
    pub observed_days: Vec<u8>,
}

impl WeeklySeries {
    /// Weeks with at least one but fewer than seven observed days.
    pub fn partial_weeks(&self) -> Vec<MmwrWeek> {
        self.weeks
            .iter()
            .zip(&self.observed_days)
            .filter(|(_, &n)| n > 0 && n < 7)
            .map(|(w, _)| *w)
            .collect()
    }
}

/// Reduces dated daily records to MMWR weeks spanning the first through the
/// last record. Missing daily values are skipped; weeks with no observed
/// value are `None`.
pub fn aggregate_daily(
    records: &[(NaiveDate, Option<f64>)],
    policy: Aggregation,
) -> Result<WeeklySeries> {
    let mut dated: Vec<(MmwrWeek, f64)> = Vec::with_capacity(records.len());
    let mut first: Option<MmwrWeek> = None;
    let mut last: Option<MmwrWeek> = None;
    for (date, value) in records {
        let w = mmwr_week_of(*date)?;
        first = Some(first.map_or(w, |f| f.min(w)));
        last = Some(last.map_or(w, |l| l.max(w)));
        if let Some(v) = value {
            dated.push((w, *v));
        }
    }
    let (Some(first), Some(last)) = (first, last) else {
        return Ok(WeeklySeries {
            weeks: vec![],
            values: vec![],
            observed_days: vec![],
        });
    };
    let weeks = week_range(first, last);
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); weeks.len()];
    for (w, v) in dated {
        buckets[first.weeks_until(&w) as usize].push(v);
    }
    let values = buckets
        .iter()
        .map(|b| {
            if b.is_empty() {
                return None;
            }
            Some(match policy {
                Aggregation::Mean => b.iter().sum::<f64>() / b.len() as f64,
                Aggregation::Sum => b.iter().sum(),
                Aggregation::Min => b.iter().copied().fold(f64::INFINITY, f64::min),
                Aggregation::Max => b.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect();
    let observed_days = buckets.iter().map(|b| b.len().min(255) as u8).collect();
    Ok(WeeklySeries {
        weeks,
        values,
        observed_days,
    })
}
