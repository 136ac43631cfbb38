//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use epigraph::dataprep::{Aggregation, DEFAULT_MAX_GAP, TARGET_NAME};
use epigraph::trainer::TrainConfig;
use sha2::{Digest, Sha256};

use crate::exit::CliError;

/// Everything one command needs: the training settings plus file paths and
/// ingest policies.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub target: String,
    /// Canonical weekly table.
    pub data: Option<PathBuf>,
    pub surveillance: Option<PathBuf>,
    pub weather: Option<PathBuf>,
    pub air_quality: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub max_gap: usize,
    pub aggregation: BTreeMap<String, Aggregation>,
    pub importance_seeds: usize,
    /// Horizons covered by `importance`; empty means the run horizon.
    pub importance_horizons: Vec<usize>,
    /// Per-origin charts written by `eval`.
    pub charts: bool,
    /// Keys set explicitly by the config file.
    pub explicit: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            target: TARGET_NAME.to_string(),
            data: None,
            surveillance: None,
            weather: None,
            air_quality: None,
            checkpoint: None,
            max_gap: DEFAULT_MAX_GAP,
            aggregation: BTreeMap::new(),
            importance_seeds: 20,
            importance_horizons: Vec::new(),
            charts: true,
            explicit: Vec::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::usage(format!("bad value {v:?} for key {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::usage(format!("bad boolean {v:?} for key {key}"))),
    }
}

fn opt_usize(key: &str, v: &str) -> Result<Option<usize>, CliError> {
    if v.is_empty() || v == "none" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_else(|| "none".into())
}

fn show_path(v: &Option<PathBuf>) -> String {
    v.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

/// Splits `text` into `(line, key, value)` triples.
pub fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::usage(format!("config line {}: empty key", i + 1)));
        }
        out.push((i + 1, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (line, k, v) in parse_lines(text)? {
            if cfg.explicit.contains(&k) {
                return Err(CliError::usage(format!("config line {line}: duplicate key {k}")));
            }
            cfg.set(&k, &v)
                .map_err(|e| CliError::usage(format!("config line {line}: {}", e.message())))?;
            cfg.explicit.push(k);
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let t = &mut self.train;
        match key {
            "horizon" => t.horizon = parse(key, v)?,
            "window" => t.window = opt_usize(key, v)?,
            "learning_rate" => t.learning_rate = parse(key, v)?,
            "max_epochs" => t.max_epochs = parse(key, v)?,
            "patience" => t.patience = parse(key, v)?,
            "min_delta" => t.min_delta = parse(key, v)?,
            "max_steps" => t.max_steps = opt_usize(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "keep_fraction" => t.keep_fraction = parse(key, v)?,
            "seed" => t.seed = parse(key, v)?,
            "train_end" => t.train_end = parse(key, v)?,
            "test_start" => t.test_start = parse(key, v)?,
            "test_end" => t.test_end = parse(key, v)?,
            "validation_fraction" => t.validation_fraction = parse(key, v)?,
            "tail_policy" => t.tail_policy = v.parse().map_err(CliError::from)?,
            "max_lag" => t.max_lag = parse(key, v)?,
            "threshold" => t.threshold = parse(key, v)?,
            "target_as_feature" => t.target_as_feature = parse_bool(key, v)?,
            "d_model" => t.d_model = parse(key, v)?,
            "n_heads" => t.n_heads = parse(key, v)?,
            "d_ff" => t.d_ff = parse(key, v)?,
            "dropout" => t.dropout = parse(key, v)?,
            "encoder_layers" => t.encoder_layers = parse(key, v)?,
            "decoder_layers" => t.decoder_layers = parse(key, v)?,
            "d_node" => t.d_node = parse(key, v)?,
            "gat_layers" => t.gat_layers = parse(key, v)?,
            "gat_heads" => t.gat_heads = parse(key, v)?,
            "track_train_mse" => t.track_train_mse = parse_bool(key, v)?,
            "target" => self.target = v.to_string(),
            "data" => self.data = opt_path(v),
            "surveillance" => self.surveillance = opt_path(v),
            "weather" => self.weather = opt_path(v),
            "air_quality" => self.air_quality = opt_path(v),
            "checkpoint" => self.checkpoint = opt_path(v),
            "max_gap" => self.max_gap = parse(key, v)?,
            "importance_seeds" => self.importance_seeds = parse(key, v)?,
            "importance_horizons" => {
                self.importance_horizons = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_, _>>()?
            }
            "charts" => self.charts = parse_bool(key, v)?,
            _ => match key.strip_prefix("aggregate.") {
                Some(var) if !var.is_empty() => {
                    self.aggregation
                        .insert(var.to_string(), v.parse().map_err(CliError::from)?);
                }
                _ => return Err(CliError::usage(format!("unknown config key {key:?}"))),
            },
        }
        Ok(())
    }

    /// Applies a command-line value, refusing to silently contradict the
    /// config file.
    pub fn override_key(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        if self.explicit.iter().any(|k| k == key) {
            let mut probe = self.clone();
            probe.set(key, v)?;
            if probe.entries() != self.entries() {
                return Err(CliError::usage(format!(
                    "--{} {v} conflicts with {key} set in the config file",
                    key.replace('_', "-")
                )));
            }
            return Ok(());
        }
        self.set(key, v)
    }

    /// Every key with its resolved value, defaults included.
    pub fn entries(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let mut e: Vec<(String, String)> = vec![
            ("horizon", t.horizon.to_string()),
            ("window", show_opt(&t.window)),
            ("learning_rate", format!("{:?}", t.learning_rate)),
            ("max_epochs", t.max_epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("min_delta", format!("{:?}", t.min_delta)),
            ("max_steps", show_opt(&t.max_steps)),
            ("batch_size", t.batch_size.to_string()),
            ("keep_fraction", format!("{:?}", t.keep_fraction)),
            ("seed", t.seed.to_string()),
            ("train_end", t.train_end.to_string()),
            ("test_start", t.test_start.to_string()),
            ("test_end", t.test_end.to_string()),
            ("validation_fraction", format!("{:?}", t.validation_fraction)),
            ("tail_policy", t.tail_policy.to_string()),
            ("max_lag", t.max_lag.to_string()),
            ("threshold", format!("{:?}", t.threshold)),
            ("target_as_feature", t.target_as_feature.to_string()),
            ("d_model", t.d_model.to_string()),
            ("n_heads", t.n_heads.to_string()),
            ("d_ff", t.d_ff.to_string()),
            ("dropout", format!("{:?}", t.dropout)),
            ("encoder_layers", t.encoder_layers.to_string()),
            ("decoder_layers", t.decoder_layers.to_string()),
            ("d_node", t.d_node.to_string()),
            ("gat_layers", t.gat_layers.to_string()),
            ("gat_heads", t.gat_heads.to_string()),
            ("track_train_mse", t.track_train_mse.to_string()),
            ("target", self.target.clone()),
            ("data", show_path(&self.data)),
            ("surveillance", show_path(&self.surveillance)),
            ("weather", show_path(&self.weather)),
            ("air_quality", show_path(&self.air_quality)),
            ("checkpoint", show_path(&self.checkpoint)),
            ("max_gap", self.max_gap.to_string()),
            ("importance_seeds", self.importance_seeds.to_string()),
            (
                "importance_horizons",
                self.importance_horizons
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("charts", self.charts.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        for (var, a) in &self.aggregation {
            e.push((format!("aggregate.{var}"), a.to_string()));
        }
        e
    }

    /// Resolved configuration in the same format it is read from.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# resolved configuration\n");
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of the resolved text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(CliError::from)?;
        if self.importance_seeds == 0 {
            return Err(CliError::usage("importance_seeds must be positive"));
        }
        Ok(())
    }

    /// Resolved values as JSON, for checkpoint and report echoes.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.entries()
                .into_iter()
                .map(|(k, v)| (k, serde_json::Value::String(v)))
                .collect(),
        )
    }

    /// Rebuilds a configuration from [`RunConfig::to_json`] output.
    pub fn from_json(v: &serde_json::Value) -> Result<Self, CliError> {
        let obj = v
            .as_object()
            .ok_or_else(|| CliError::usage("checkpoint carries no run configuration"))?;
        let mut cfg = Self::default();
        for (k, v) in obj {
            let s = v
                .as_str()
                .ok_or_else(|| CliError::usage(format!("non-string config value for {k}")))?;
            cfg.set(k, s)?;
        }
        Ok(cfg)
    }
}
