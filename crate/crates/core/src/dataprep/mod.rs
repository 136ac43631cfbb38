//! Weekly alignment, imputation, scaling, differencing, lagging and
//! windowing of surveillance and environmental series.

mod aggregate;
mod difference;
mod impute;
pub mod io;
mod lags;
pub mod mmwr;
mod scaler;
mod synth;
mod table;
mod window;

pub use aggregate::{aggregate_daily, WeeklySeries};
pub use difference::{difference, inverse_difference};
pub use impute::{impute, DEFAULT_MAX_GAP};
pub use lags::{build_lags, lag_name, parse_lag_name, DEFAULT_MAX_LAG};
pub use mmwr::{mmwr_week_of, MmwrWeek};
pub use scaler::{apply_scaler, fit_scaler, ScalerState};
pub use synth::{predictor_name, synth_generate, SynthSpec, SynthTruth, TARGET_NAME};
pub use table::{Aggregation, Frame, SeriesTable, Source, Variable};
pub use window::{prepare, window, PrepareConfig, Prepared, Sample, WindowedDataset};
