use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mmwr::MmwrWeek;
use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Surveillance,
    Weather,
    AirQuality,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Min,
    Max,
    Sum,
}

impl Aggregation {
    /// Default weekly reduction for a daily variable, read off its name:
    /// "Total" sums, "Min"/"Max" take the extreme, everything else averages.
    pub fn infer(name: &str) -> Self {
        let has = |w: &str| {
            name.split(|c: char| !c.is_alphanumeric())
                .any(|tok| tok.eq_ignore_ascii_case(w))
        };
        if has("total") {
            Aggregation::Sum
        } else if has("min") {
            Aggregation::Min
        } else if has("max") {
            Aggregation::Max
        } else {
            Aggregation::Mean
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Min => "min",
            Aggregation::Max => "max",
            Aggregation::Sum => "sum",
        })
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Aggregation::Mean),
            "min" => Ok(Aggregation::Min),
            "max" => Ok(Aggregation::Max),
            "sum" => Ok(Aggregation::Sum),
            other => Err(Error::Config(format!("unknown aggregation policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub source: Source,
    pub aggregation: Aggregation,
}

impl Variable {
    pub fn new(name: impl Into<String>, source: Source) -> Self {
        let name = name.into();
        let aggregation = Aggregation::infer(&name);
        Self {
            name,
            source,
            aggregation,
        }
    }
}

/// Weekly multivariate table with optional-missing cells, stored by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTable {
    pub weeks: Vec<MmwrWeek>,
    pub variables: Vec<Variable>,
    pub columns: Vec<Vec<Option<f64>>>,
    /// `imputed[m][t]` marks cells filled by imputation.
    pub imputed: Vec<Vec<bool>>,
}

impl SeriesTable {
    pub fn new(
        weeks: Vec<MmwrWeek>,
        variables: Vec<Variable>,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if variables.len() != columns.len() {
            return Err(contract(format!(
                "{} variables but {} columns",
                variables.len(),
                columns.len()
            )));
        }
        if let Some((v, c)) = variables
            .iter()
            .zip(&columns)
            .find(|(_, c)| c.len() != weeks.len())
        {
            return Err(contract(format!(
                "column {} has {} rows, expected {}",
                v.name,
                c.len(),
                weeks.len()
            )));
        }
        for pair in weeks.windows(2) {
            if pair[0].weeks_until(&pair[1]) != 1 {
                return Err(contract(format!(
                    "weeks not consecutive: {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        let imputed = columns.iter().map(|c| vec![false; c.len()]).collect();
        Ok(Self {
            weeks,
            variables,
            columns,
            imputed,
        })
    }

    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.columns.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Gap-free numeric view; fails if any cell is still missing.
    pub fn to_frame(&self) -> Result<Frame> {
        let mut columns = Vec::with_capacity(self.columns.len());
        for (v, col) in self.variables.iter().zip(&self.columns) {
            let dense: Option<Vec<f64>> = col.iter().copied().collect();
            columns.push(dense.ok_or_else(|| {
                Error::DataQuality(format!("column {} still has missing cells", v.name))
            })?);
        }
        Ok(Frame {
            weeks: self.weeks.clone(),
            names: self.names(),
            columns,
        })
    }
}

/// Gap-free numeric table, stored by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub weeks: Vec<MmwrWeek>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.position(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| contract(format!("no column named {name:?}")))
    }

    /// Keeps only the columns at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Frame {
        Frame {
            weeks: self.weeks.clone(),
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
        }
    }

    /// Rows `start..end`.
    pub fn rows(&self, start: usize, end: usize) -> Frame {
        Frame {
            weeks: self.weeks[start..end].to_vec(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[start..end].to_vec()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregation_follows_variable_names() {
        assert_eq!(Aggregation::infer("Solar Rad. - Total"), Aggregation::Sum);
        assert_eq!(Aggregation::infer("RH - Min"), Aggregation::Min);
        assert_eq!(Aggregation::infer("20\" Soil Temp - Max"), Aggregation::Max);
        assert_eq!(Aggregation::infer("Dewpoint - Daily Mean"), Aggregation::Mean);
        assert_eq!(Aggregation::infer("Minnesota index"), Aggregation::Mean);
        assert_eq!("SUM".parse::<Aggregation>().unwrap(), Aggregation::Sum);
        assert!("median".parse::<Aggregation>().is_err());
    }
}
