use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::train::train;
use crate::dataprep::Prepared;
use crate::error::{contract, Result};
use crate::graphnet::{gate_ranks, top_k_count, VariableGraph};

/// Gate outcome of one seeded training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRun {
    pub seed: u64,
    pub selected: Vec<usize>,
    pub gates: Vec<f64>,
    /// 1-based rank of every feature by gate value.
    pub ranks: Vec<usize>,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub name: String,
    /// Share of seeds that kept the feature.
    pub frequency: f64,
    pub mean_rank: f64,
    pub mean_gate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub horizon: usize,
    pub k: usize,
    pub seeds: Vec<u64>,
    /// Sorted by frequency (descending), then mean rank.
    pub features: Vec<FeatureImportance>,
    pub runs: Vec<ImportanceRun>,
}

impl ImportanceReport {
    pub fn frequency_of(&self, name: &str) -> Option<f64> {
        self.features.iter().find(|f| f.name == name).map(|f| f.frequency)
    }

    /// 1-based position among the `k` most frequent features, if there.
    pub fn table_rank(&self, name: &str) -> Option<usize> {
        self.features
            .iter()
            .take(self.k)
            .position(|f| f.name == name)
            .map(|p| p + 1)
    }
}

/// Worker count: `EPIGRAPH_THREADS` when set, otherwise available cores.
pub fn worker_threads() -> usize {
    std::env::var("EPIGRAPH_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Trains one model per seed and aggregates which features the gate kept.
pub fn importance(
    cfg: &TrainConfig,
    prepared: &Prepared,
    graph: &VariableGraph,
    seeds: &[u64],
    threads: usize,
) -> Result<ImportanceReport> {
    if seeds.is_empty() {
        return Err(contract("importance needs at least one seed"));
    }
    let run_one = |&seed: &u64| -> Result<ImportanceRun> {
        let c = TrainConfig {
            seed,
            ..cfg.clone()
        };
        let (model, log) = train(&c, prepared, graph.clone())?;
        let gates = model.gate_values()?;
        Ok(ImportanceRun {
            seed,
            selected: model.selected_features()?,
            ranks: gate_ranks(&gates),
            gates,
            best_val_loss: log.best_val_loss,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| contract(format!("thread pool: {e}")))?;
    let runs: Vec<ImportanceRun> =
        pool.install(|| seeds.par_iter().map(run_one).collect::<Result<Vec<_>>>())?;
    aggregate(cfg.horizon, &prepared.feature_names, cfg.keep_fraction, seeds, runs)
}

pub fn aggregate(
    horizon: usize,
    names: &[String],
    keep_fraction: f64,
    seeds: &[u64],
    runs: Vec<ImportanceRun>,
) -> Result<ImportanceReport> {
    let m = names.len();
    let k = top_k_count(m, keep_fraction)?;
    let n = runs.len() as f64;
    let mut features: Vec<FeatureImportance> = (0..m)
        .map(|i| FeatureImportance {
            name: names[i].clone(),
            frequency: runs.iter().filter(|r| r.selected.contains(&i)).count() as f64 / n,
            mean_rank: runs.iter().map(|r| r.ranks[i] as f64).sum::<f64>() / n,
            mean_gate: runs.iter().map(|r| r.gates[i]).sum::<f64>() / n,
        })
        .collect();
    features.sort_by(|a, b| {
        b.frequency
            .total_cmp(&a.frequency)
            .then(a.mean_rank.total_cmp(&b.mean_rank))
    });
    Ok(ImportanceReport {
        horizon,
        k,
        seeds: seeds.to_vec(),
        features,
        runs,
    })
}
