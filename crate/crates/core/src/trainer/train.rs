use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::dataprep::{prepare, window, Frame, PrepareConfig, Prepared, WindowedDataset};
use crate::error::{contract, Result};
use crate::graphnet::{build_graph, pearson_matrix, VariableGraph};
use crate::seq2seq::{Mode, ModelState};
use crate::tensor::{stream_rng, Adam, AdamConfig, Bound, ParamMap, Tape};

/// Lags, scales and differences `frame`, then builds the correlation graph
/// from the training rows only.
pub fn prepare_with_graph(
    frame: &Frame,
    target: &str,
    cfg: &TrainConfig,
) -> Result<(Prepared, VariableGraph)> {
    let prepared = prepare(
        frame,
        &PrepareConfig {
            target: target.to_string(),
            max_lag: cfg.max_lag,
            train_end: cfg.train_end,
            target_as_feature: cfg.target_as_feature,
        },
    )?;
    let cols = prepared.train_columns(cfg.train_end);
    let rho = pearson_matrix(&cols)?;
    let graph = build_graph(&prepared.feature_names, &rho, cfg.threshold)?;
    Ok((prepared, graph))
}

/// Windows whose every target week is within the training split, divided
/// chronologically into fit and validation parts.
pub fn training_windows(
    cfg: &TrainConfig,
    prepared: &Prepared,
) -> Result<(WindowedDataset, WindowedDataset)> {
    let (w, h) = (cfg.window(), cfg.horizon);
    let all = window(prepared, w, h, 1)?;
    let usable: Vec<usize> = (0..all.len())
        .filter(|&i| all.origin_index[i] + h - 1 <= cfg.train_end)
        .collect();
    let n_val = ((usable.len() as f64) * cfg.validation_fraction).ceil() as usize;
    if usable.len() < 2 || n_val == 0 || n_val >= usable.len() {
        return Err(contract(format!(
            "{} training windows leave no validation split",
            usable.len()
        )));
    }
    let cut = usable.len() - n_val;
    Ok((all.subset(&usable[..cut]), all.subset(&usable[cut..])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    /// Mean training-mode batch loss.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Evaluation-mode MSE over the fit windows, when tracked.
    pub train_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub steps: usize,
    pub stopped_early: bool,
    pub train_windows: usize,
    pub val_windows: usize,
}

/// Evaluation-mode MSE of `model` over every window of `ds`.
pub fn dataset_mse(model: &ModelState, ds: &WindowedDataset, batch: usize) -> Result<f64> {
    if ds.is_empty() {
        return Err(contract("MSE over an empty dataset"));
    }
    let mut sse = 0.0;
    let mut n = 0usize;
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let sub = ds.subset(chunk);
        let pred = model.predict_deltas(&sub.inputs, &sub.decoder_inputs, chunk.len())?;
        for (p, t) in pred.iter().zip(&sub.targets) {
            sse += (p - t) * (p - t);
        }
        n += pred.len();
    }
    Ok(sse / n as f64)
}

/// One optimizer step on `batch`; returns the batch loss.
fn step(
    model: &mut ModelState,
    adam: &mut Adam,
    batch: &WindowedDataset,
    mode: &mut Mode<'_>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, &model.params);
    let out = model.forward(
        &mut tape,
        &bound,
        &batch.inputs,
        &batch.decoder_inputs,
        batch.len(),
        mode,
    )?;
    let target = tape.constant(&[batch.len(), batch.horizon], batch.targets.clone())?;
    let loss = tape.mse(out.deltas, target)?;
    let value = tape.value(loss)[0];
    if !value.is_finite() {
        return Err(crate::Error::Numeric("training loss"));
    }
    tape.backward(loss)?;
    let grads = bound.grads(&tape);
    adam.step(&mut model.params, &grads)?;
    Ok(value)
}

/// Fits a fresh model on the training windows of `prepared`.
///
/// Adam minimises MSE on the scaled differenced targets. Validation MSE is
/// measured after every epoch; training stops once it has not improved by
/// more than `min_delta` for `patience` epochs, or at `max_epochs` /
/// `max_steps`. The parameters of the best validation epoch are returned.
pub fn train(
    cfg: &TrainConfig,
    prepared: &Prepared,
    graph: VariableGraph,
) -> Result<(ModelState, TrainLog)> {
    cfg.validate()?;
    let (fit, val) = training_windows(cfg, prepared)?;
    let mut model = ModelState::new(cfg.model_config(), prepared, graph, cfg.seed)?;
    let mut adam = Adam::new(AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    });
    let mut shuffle_rng = stream_rng(cfg.seed, 2);
    let mut dropout_rng = stream_rng(cfg.seed, 3);

    let mut best: Option<(f64, usize, ParamMap)> = None;
    let mut since_best = 0;
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        steps: 0,
        stopped_early: false,
        train_windows: fit.len(),
        val_windows: val.len(),
    };
    let mut order: Vec<usize> = (0..fit.len()).collect();
    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        let mut capped = false;
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| log.steps >= m) {
                capped = true;
                break;
            }
            let batch = fit.subset(chunk);
            let mut mode = Mode {
                training: true,
                rng: &mut dropout_rng,
            };
            let l = step(&mut model, &mut adam, &batch, &mut mode)?;
            loss_sum += l * chunk.len() as f64;
            seen += chunk.len();
            log.steps += 1;
        }
        if seen == 0 {
            break;
        }
        let val_loss = dataset_mse(&model, &val, cfg.batch_size)?;
        let train_mse = if cfg.track_train_mse {
            Some(dataset_mse(&model, &fit, cfg.batch_size)?)
        } else {
            None
        };
        log::debug!(
            "epoch {epoch}: train {:.6e} val {val_loss:.6e}",
            loss_sum / seen as f64
        );
        log.epochs.push(EpochLog {
            epoch,
            steps: log.steps,
            train_loss: loss_sum / seen as f64,
            val_loss,
            train_mse,
        });
        let improved = match &best {
            None => true,
            Some((b, _, _)) => val_loss < b - cfg.min_delta,
        };
        if improved {
            best = Some((val_loss, epoch, model.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log.stopped_early = true;
                break 'epochs;
            }
        }
        if capped {
            break;
        }
    }
    let (best_val, best_epoch, params) =
        best.ok_or_else(|| contract("training ran no epochs"))?;
    model.params = params;
    log.best_epoch = best_epoch;
    log.best_val_loss = best_val;
    Ok((model, log))
}
