//! Training with early stopping, walk-forward evaluation, error metrics and
//! multi-seed gate stability.

mod config;
mod importance;
mod metrics;
mod report;
mod train;
mod walk_forward;

pub use config::{TailPolicy, TrainConfig, STANDARD_HORIZONS};
pub use importance::{aggregate, importance, worker_threads, FeatureImportance, ImportanceReport, ImportanceRun};
pub use metrics::{metrics, MetricsReport};
pub use report::{summarize, write_forecast_csv, write_importance_csv, write_metrics_csv, MetricsSummary};
pub use train::{dataset_mse, prepare_with_graph, train, training_windows, EpochLog, TrainLog};
pub use walk_forward::{walk_forward, walk_forward_origins, ForecastReport, ForecastRow};
