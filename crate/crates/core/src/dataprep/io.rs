//! Delimited-text loaders for the three source schemas and the canonical
//! aligned table.
//!
//! * surveillance: `mmwr_year, mmwr_week, <series...>` (weekly)
//! * weather / air quality: `date, <series...>` with ISO-8601 dates (daily)
//! * canonical: `week_start, mmwr_year, mmwr_week, <series...>`
//!
//! Missing cells are empty.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::aggregate::aggregate_daily;
use super::impute::impute;
use super::mmwr::{week_range, MmwrWeek};
use super::table::{Aggregation, SeriesTable, Source, Variable};
use crate::error::{contract, Error, Result};

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_cell(file: &str, line: usize, cell: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| parse_err(file, line, format!("not a number: {cell:?}")))
}

fn reader<R: Read>(src: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(src)
}

/// Weekly surveillance counts keyed by `(mmwr_year, mmwr_week)`.
pub fn read_surveillance<R: Read>(src: R, file: &str) -> Result<SeriesTable> {
    let mut rdr = reader(src);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "mmwr_year" || &headers[1] != "mmwr_week" {
        return Err(parse_err(
            file,
            1,
            "expected header mmwr_year, mmwr_week, <series...>",
        ));
    }
    let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut rows: BTreeMap<MmwrWeek, Vec<Option<f64>>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(file, line, e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(parse_err(file, line, "wrong number of fields"));
        }
        let year: i32 = rec[0]
            .parse()
            .map_err(|_| parse_err(file, line, "bad mmwr_year"))?;
        let week: u32 = rec[1]
            .parse()
            .map_err(|_| parse_err(file, line, "bad mmwr_week"))?;
        let w = MmwrWeek::new(year, week).map_err(|e| parse_err(file, line, e.to_string()))?;
        let vals = (2..rec.len())
            .map(|c| parse_cell(file, line, &rec[c]))
            .collect::<Result<Vec<_>>>()?;
        if rows.insert(w, vals).is_some() {
            return Err(parse_err(file, line, format!("duplicate week {w}")));
        }
    }
    let (Some(first), Some(last)) = (rows.keys().next().copied(), rows.keys().last().copied())
    else {
        return Err(parse_err(file, 2, "no data rows"));
    };
    let weeks = week_range(first, last);
    let columns = (0..names.len())
        .map(|c| {
            weeks
                .iter()
                .map(|w| rows.get(w).and_then(|r| r[c]))
                .collect()
        })
        .collect();
    let variables = names
        .iter()
        .map(|n| Variable {
            name: n.clone(),
            source: Source::Surveillance,
            aggregation: Aggregation::Sum,
        })
        .collect();
    SeriesTable::new(weeks, variables, columns)
}

/// Daily records: header `date, <series...>`.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyTable {
    pub names: Vec<String>,
    pub records: Vec<(NaiveDate, Vec<Option<f64>>)>,
}

pub fn read_daily<R: Read>(src: R, file: &str) -> Result<DailyTable> {
    let mut rdr = reader(src);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "date" {
        return Err(parse_err(file, 1, "expected header date, <series...>"));
    }
    let names = headers.iter().skip(1).map(str::to_string).collect();
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(file, line, e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(parse_err(file, line, "wrong number of fields"));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|_| parse_err(file, line, format!("bad ISO date {:?}", &rec[0])))?;
        let vals = (1..rec.len())
            .map(|c| parse_cell(file, line, &rec[c]))
            .collect::<Result<Vec<_>>>()?;
        records.push((date, vals));
    }
    if records.is_empty() {
        return Err(parse_err(file, 2, "no data rows"));
    }
    Ok(DailyTable { names, records })
}

/// Aggregates every daily column to MMWR weeks. `policies` overrides the
/// name-inferred default per variable.
pub fn daily_to_weekly(
    daily: &DailyTable,
    source: Source,
    policies: &BTreeMap<String, Aggregation>,
) -> Result<(SeriesTable, Vec<MmwrWeek>)> {
    let mut variables = Vec::new();
    let mut columns = Vec::new();
    let mut weeks = Vec::new();
    let mut partial = Vec::new();
    for (c, name) in daily.names.iter().enumerate() {
        let agg = policies
            .get(name)
            .copied()
            .unwrap_or_else(|| Aggregation::infer(name));
        let recs: Vec<(NaiveDate, Option<f64>)> =
            daily.records.iter().map(|(d, v)| (*d, v[c])).collect();
        let weekly = aggregate_daily(&recs, agg)?;
        partial.extend(weekly.partial_weeks());
        weeks = weekly.weeks;
        columns.push(weekly.values);
        variables.push(Variable {
            name: name.clone(),
            source,
            aggregation: agg,
        });
    }
    partial.sort();
    partial.dedup();
    Ok((SeriesTable::new(weeks, variables, columns)?, partial))
}

/// Restricts every table to the common week range and joins their columns.
/// Returns the joined table and the weeks dropped from any input.
pub fn align(parts: &[SeriesTable]) -> Result<(SeriesTable, Vec<MmwrWeek>)> {
    let nonempty: Vec<&SeriesTable> = parts.iter().filter(|p| !p.is_empty()).collect();
    if nonempty.is_empty() {
        return Err(contract("nothing to align"));
    }
    let first = nonempty.iter().map(|p| p.weeks[0]).max().expect("nonempty");
    let last = nonempty
        .iter()
        .map(|p| *p.weeks.last().expect("nonempty"))
        .min()
        .expect("nonempty");
    if first > last {
        return Err(Error::DataQuality(
            "input files share no common weeks".to_string(),
        ));
    }
    let weeks = week_range(first, last);
    let mut dropped = Vec::new();
    let mut variables = Vec::new();
    let mut columns = Vec::new();
    for p in &nonempty {
        dropped.extend(p.weeks.iter().filter(|w| **w < first || **w > last));
        let offset = p.weeks[0].weeks_until(&first) as usize;
        for (v, col) in p.variables.iter().zip(&p.columns) {
            if variables.iter().any(|x: &Variable| x.name == v.name) {
                return Err(contract(format!("variable {} appears in two inputs", v.name)));
            }
            variables.push(v.clone());
            columns.push(col[offset..offset + weeks.len()].to_vec());
        }
    }
    dropped.sort();
    dropped.dedup();
    Ok((SeriesTable::new(weeks, variables, columns)?, dropped))
}

/// Provenance of one ingest run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub weeks: usize,
    pub first_week: MmwrWeek,
    pub last_week: MmwrWeek,
    pub dropped_weeks: Vec<MmwrWeek>,
    pub partial_weeks: Vec<MmwrWeek>,
    /// `(variable, week)` of every imputed cell.
    pub imputed: Vec<(String, MmwrWeek)>,
    pub aggregation: BTreeMap<String, Aggregation>,
}

/// Loads, aggregates, aligns and imputes the source files.
pub fn ingest_files(
    surveillance: &Path,
    weather: Option<&Path>,
    air_quality: Option<&Path>,
    policies: &BTreeMap<String, Aggregation>,
    max_gap: usize,
) -> Result<(SeriesTable, IngestReport)> {
    let name = |p: &Path| p.display().to_string();
    let mut parts = vec![read_surveillance(
        std::fs::File::open(surveillance)?,
        &name(surveillance),
    )?];
    let mut partial = Vec::new();
    for (path, source) in [(weather, Source::Weather), (air_quality, Source::AirQuality)] {
        if let Some(p) = path {
            let daily = read_daily(std::fs::File::open(p)?, &name(p))?;
            let (t, part) = daily_to_weekly(&daily, source, policies)?;
            partial.extend(part);
            parts.push(t);
        }
    }
    let (aligned, dropped) = align(&parts)?;
    partial.retain(|w| aligned.weeks.contains(w));
    partial.sort();
    partial.dedup();
    let filled = impute(&aligned, max_gap)?;
    let mut imputed = Vec::new();
    for (v, flags) in filled.variables.iter().zip(&filled.imputed) {
        for (w, f) in filled.weeks.iter().zip(flags) {
            if *f {
                imputed.push((v.name.clone(), *w));
            }
        }
    }
    let report = IngestReport {
        weeks: filled.len(),
        first_week: filled.weeks[0],
        last_week: *filled.weeks.last().expect("aligned table is non-empty"),
        dropped_weeks: dropped,
        partial_weeks: partial,
        imputed,
        aggregation: filled
            .variables
            .iter()
            .map(|v| (v.name.clone(), v.aggregation))
            .collect(),
    };
    Ok((filled, report))
}

fn fmt_num(v: f64) -> String {
    // shortest representation that parses back to the same f64
    format!("{v:?}")
}

pub fn write_canonical<W: Write>(table: &SeriesTable, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec![
        "week_start".to_string(),
        "mmwr_year".to_string(),
        "mmwr_week".to_string(),
    ];
    header.extend(table.names());
    wtr.write_record(&header)?;
    for (t, w) in table.weeks.iter().enumerate() {
        let mut row = vec![
            w.start.format("%Y-%m-%d").to_string(),
            w.year.to_string(),
            w.week.to_string(),
        ];
        row.extend(
            table
                .columns
                .iter()
                .map(|c| c[t].map(fmt_num).unwrap_or_default()),
        );
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_canonical<R: Read>(src: R, file: &str) -> Result<SeriesTable> {
    let mut rdr = reader(src);
    let headers = rdr.headers()?.clone();
    if headers.len() < 4
        || &headers[0] != "week_start"
        || &headers[1] != "mmwr_year"
        || &headers[2] != "mmwr_week"
    {
        return Err(parse_err(
            file,
            1,
            "expected header week_start, mmwr_year, mmwr_week, <series...>",
        ));
    }
    let names: Vec<String> = headers.iter().skip(3).map(str::to_string).collect();
    let mut weeks = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(file, line, e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(parse_err(file, line, "wrong number of fields"));
        }
        let year: i32 = rec[1]
            .parse()
            .map_err(|_| parse_err(file, line, "bad mmwr_year"))?;
        let week: u32 = rec[2]
            .parse()
            .map_err(|_| parse_err(file, line, "bad mmwr_week"))?;
        let w = MmwrWeek::new(year, week).map_err(|e| parse_err(file, line, e.to_string()))?;
        if w.start.format("%Y-%m-%d").to_string() != rec[0] {
            return Err(parse_err(file, line, "week_start disagrees with MMWR week"));
        }
        weeks.push(w);
        for (c, col) in columns.iter_mut().enumerate() {
            col.push(parse_cell(file, line, &rec[c + 3])?);
        }
    }
    let variables = names
        .iter()
        .map(|n| Variable::new(n.clone(), Source::Weather))
        .collect();
    SeriesTable::new(weeks, variables, columns)
        .map_err(|e| parse_err(file, 0, e.to_string()))
}
