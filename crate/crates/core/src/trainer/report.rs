use std::io::Write;

use serde::Serialize;

use super::importance::ImportanceReport;
use super::metrics::{metrics, MetricsReport};
use super::walk_forward::ForecastReport;
use crate::error::Result;

fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_forecast_csv<W: Write>(report: &ForecastReport, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["origin_week", "step", "horizon", "y_true", "y_pred"])?;
    for r in &report.rows {
        wtr.write_record([
            r.origin_week.map(|w| w.to_string()).unwrap_or_default(),
            r.step.to_string(),
            r.horizon.to_string(),
            r.y_true.map(num).unwrap_or_default(),
            num(r.y_pred),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Aggregate metrics plus one row per horizon step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub horizon: usize,
    pub overall: MetricsReport,
    pub per_step: Vec<(usize, MetricsReport)>,
}

pub fn summarize(report: &ForecastReport) -> Result<MetricsSummary> {
    let (p, y) = report.scored();
    let overall = metrics(&p, &y)?;
    let mut per_step = Vec::new();
    for s in 1..=report.horizon {
        let (p, y) = report.scored_step(s);
        if !p.is_empty() {
            per_step.push((s, metrics(&p, &y)?));
        }
    }
    Ok(MetricsSummary {
        horizon: report.horizon,
        overall,
        per_step,
    })
}

pub fn write_metrics_csv<W: Write>(summaries: &[MetricsSummary], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "horizon",
        "step",
        "n",
        "mape",
        "mae",
        "mse",
        "rse",
        "rse_numerator",
        "rse_denominator",
        "zero_actuals",
    ])?;
    for s in summaries {
        let rows = std::iter::once(("all".to_string(), &s.overall))
            .chain(s.per_step.iter().map(|(k, m)| (k.to_string(), m)));
        for (step, m) in rows {
            wtr.write_record([
                s.horizon.to_string(),
                step,
                m.n.to_string(),
                num(m.mape),
                num(m.mae),
                num(m.mse),
                num(m.rse),
                num(m.rse_numerator),
                num(m.rse_denominator),
                m.zero_actuals.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Ranking table with one rank column per horizon (blank outside the
/// top-k) followed by frequency, mean rank and mean gate per horizon.
pub fn write_importance_csv<W: Write>(reports: &[ImportanceReport], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["feature".to_string()];
    for r in reports {
        header.push(format!("rank_h{}", r.horizon));
    }
    for r in reports {
        header.push(format!("frequency_h{}", r.horizon));
        header.push(format!("mean_rank_h{}", r.horizon));
        header.push(format!("mean_gate_h{}", r.horizon));
    }
    wtr.write_record(&header)?;
    let mut names: Vec<&str> = Vec::new();
    for r in reports {
        for f in &r.features {
            if !names.contains(&f.name.as_str()) {
                names.push(&f.name);
            }
        }
    }
    let key = |n: &str| {
        reports
            .iter()
            .filter_map(|r| r.table_rank(n))
            .min()
            .unwrap_or(usize::MAX)
    };
    names.sort_by_key(|n| key(n));
    for n in names {
        let mut row = vec![n.to_string()];
        for r in reports {
            row.push(r.table_rank(n).map(|x| x.to_string()).unwrap_or_default());
        }
        for r in reports {
            let f = r.features.iter().find(|f| f.name == n);
            row.push(f.map(|f| num(f.frequency)).unwrap_or_default());
            row.push(f.map(|f| num(f.mean_rank)).unwrap_or_default());
            row.push(f.map(|f| num(f.mean_gate)).unwrap_or_default());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
