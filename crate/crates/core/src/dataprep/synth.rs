//! Seeded synthetic weekly tables with a known lagged driver.
//!
//! Every predictor is a sinusoid with its own phase (unit amplitude for the
//! driver, `distractor_seasonality` for the rest) plus an AR(1)
//! component (`wiggle`) and white noise. The target is
//! `baseline + amplitude * driver[t - lag]` plus `amplitude * noise` white
//! noise, so with `noise = 0` it is an exact function of the lagged driver.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lags::lag_name;
use super::mmwr::{week_range, MmwrWeek};
use super::table::{SeriesTable, Source, Variable};
use crate::error::{contract, Result};
use crate::tensor::stream_rng;

pub const TARGET_NAME: &str = "cases";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub weeks: usize,
    pub predictors: usize,
    pub period: f64,
    pub noise: f64,
    /// Zero-based index of the driving predictor.
    pub driver: usize,
    pub driver_lag: usize,
    pub baseline: f64,
    pub amplitude: f64,
    /// Scale of each predictor's AR(1) component.
    pub wiggle: f64,
    pub ar_coef: f64,
    /// Seasonal amplitude of the non-driver predictors.
    pub distractor_seasonality: f64,
    pub start_year: i32,
    pub start_week: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            weeks: 200,
            predictors: 4,
            period: 52.0,
            noise: 0.1,
            driver: 0,
            driver_lag: 4,
            baseline: 100.0,
            amplitude: 30.0,
            wiggle: 0.5,
            ar_coef: 0.8,
            distractor_seasonality: 1.0,
            start_year: 2006,
            start_week: 1,
        }
    }
}

/// What the generator planted, for recovery tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub target: String,
    pub driver_variable: String,
    pub driver_lag: usize,
    pub driver_column: String,
    pub seed: u64,
}

pub fn predictor_name(i: usize) -> String {
    format!("X{}", i + 1)
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.weeks < 2 || self.predictors == 0 {
            return Err(contract("synthetic spec needs >= 2 weeks and >= 1 predictor"));
        }
        if self.driver >= self.predictors {
            return Err(contract(format!(
                "driver {} out of range for {} predictors",
                self.driver, self.predictors
            )));
        }
        if !(self.period > 0.0) || self.noise < 0.0 || self.wiggle < 0.0 || self.distractor_seasonality < 0.0 {
            return Err(contract("period must be positive; noise, wiggle and seasonality non-negative"));
        }
        if !(0.0..1.0).contains(&self.ar_coef) {
            return Err(contract("ar_coef must lie in [0, 1)"));
        }
        Ok(())
    }
}

pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<(SeriesTable, SynthTruth)> {
    spec.validate()?;
    let lag = spec.driver_lag;
    let n = spec.weeks + lag;
    let mut phase_rng = stream_rng(seed, 0);
    let phases: Vec<f64> = (0..spec.predictors)
        .map(|_| phase_rng.gen_range(0.0..2.0 * PI))
        .collect();

    // series index s corresponds to week s - lag
    let mut predictors = Vec::with_capacity(spec.predictors);
    for (j, phase) in phases.iter().enumerate() {
        let mut rng = stream_rng(seed, 1 + j as u64);
        let innov = (1.0 - spec.ar_coef * spec.ar_coef).sqrt();
        let mut ar: f64 = rng.sample(StandardNormal);
        let mut series = Vec::with_capacity(n);
        for s in 0..n {
            let t = s as f64 - lag as f64;
            let eps: f64 = rng.sample(StandardNormal);
            let shock: f64 = rng.sample(StandardNormal);
            ar = spec.ar_coef * ar + innov * shock;
            let amp = if j == spec.driver { 1.0 } else { spec.distractor_seasonality };
            let seasonal = amp * (2.0 * PI * t / spec.period + phase).sin();
            series.push(seasonal + spec.wiggle * ar + spec.noise * eps);
        }
        predictors.push(series);
    }

    let mut target_rng = stream_rng(seed, 10_000);
    let driver = &predictors[spec.driver];
    let target: Vec<Option<f64>> = (0..spec.weeks)
        .map(|t| {
            let eta: f64 = target_rng.sample(StandardNormal);
            Some(spec.baseline + spec.amplitude * driver[t] + spec.amplitude * spec.noise * eta)
        })
        .collect();

    let first = MmwrWeek::new(spec.start_year, spec.start_week)?;
    let mut last = first;
    for _ in 1..spec.weeks {
        last = last.next();
    }
    let mut variables: Vec<Variable> = (0..spec.predictors)
        .map(|j| Variable::new(predictor_name(j), Source::Synthetic))
        .collect();
    variables.push(Variable::new(TARGET_NAME, Source::Surveillance));
    let mut columns: Vec<Vec<Option<f64>>> = predictors
        .iter()
        .map(|p| p[lag..].iter().map(|v| Some(*v)).collect())
        .collect();
    columns.push(target);
    let table = SeriesTable::new(week_range(first, last), variables, columns)?;
    let driver_variable = predictor_name(spec.driver);
    Ok((
        table,
        SynthTruth {
            target: TARGET_NAME.to_string(),
            driver_column: lag_name(&driver_variable, lag),
            driver_variable,
            driver_lag: lag,
            seed,
        },
    ))
}
