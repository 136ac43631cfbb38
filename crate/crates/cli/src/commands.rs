use std::fs;
use std::path::{Path, PathBuf};

use epigraph::dataprep::{
    synth_generate, Frame, MmwrWeek, Prepared, SynthSpec,
};
use epigraph::dataprep::io::{ingest_files, read_canonical, write_canonical};
use epigraph::graphnet::{gate_values, select_top_k, top_k_count, write_mask};
use epigraph::seq2seq::{layer_grad_checks, ModelState};
use epigraph::trainer::{
    importance, prepare_with_graph, summarize, train, walk_forward, worker_threads, write_forecast_csv,
    write_importance_csv, write_metrics_csv, ForecastReport, TrainConfig,
};
use serde::Serialize;

use crate::config::{parse_lines, RunConfig};
use crate::exit::{CliError, CHECK_FAILED, MISSING_ARTIFACT};
use crate::manifest::{digest_all, now, RunManifest};
use crate::svg::{horizon_color, line_chart, Series, OBSERVED};

pub const TABLE_FILE: &str = "table.csv";
pub const CHECKPOINT_FILE: &str = "model.json";

/// Output directory bookkeeping shared by all commands.
pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    command: &'static str,
    started: String,
    inputs: Vec<PathBuf>,
    artifacts: Vec<PathBuf>,
}

impl Run {
    pub fn new(command: &'static str, cfg: RunConfig, out: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&out)?;
        Ok(Self {
            cfg,
            out,
            command,
            started: now(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.artifacts.push(path.clone());
        Ok(path)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes the resolved config and the manifest.
    pub fn finish(mut self) -> Result<(), CliError> {
        let text = self.cfg.to_text();
        self.write("config.resolved", text.as_bytes())?;
        let manifest = RunManifest {
            command: self.command.to_string(),
            config_hash: self.cfg.hash(),
            seed: self.cfg.train.seed,
            started: self.started.clone(),
            finished: now(),
            inputs: digest_all(&self.inputs)?,
            artifacts: digest_all(&self.artifacts)?,
        };
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        fs::write(self.out.join("manifest.json"), json)?;
        Ok(())
    }

    fn data_path(&self) -> PathBuf {
        self.cfg.data.clone().unwrap_or_else(|| self.out.join(TABLE_FILE))
    }

    fn checkpoint_path(&self) -> PathBuf {
        self.cfg
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join(CHECKPOINT_FILE))
    }

    fn load_frame(&mut self) -> Result<Frame, CliError> {
        let path = self.data_path();
        let file = fs::File::open(&path).map_err(|e| {
            CliError::new(MISSING_ARTIFACT, format!("cannot open table {}: {e}", path.display()))
        })?;
        let table = read_canonical(file, &path.display().to_string())?;
        self.input(&path);
        Ok(table.to_frame()?)
    }

    fn load_model(&mut self) -> Result<(ModelState, RunConfig), CliError> {
        let path = self.checkpoint_path();
        let file = fs::File::open(&path).map_err(|e| {
            CliError::new(MISSING_ARTIFACT, format!("cannot open checkpoint {}: {e}", path.display()))
        })?;
        let (model, echo) = ModelState::read_checkpoint(std::io::BufReader::new(file))?;
        self.input(&path);
        Ok((model, RunConfig::from_json(&echo)?))
    }

    /// Prepares `frame` the way the checkpoint's training run did.
    fn prepare_like(&self, frame: &Frame, trained: &RunConfig) -> Result<Prepared, CliError> {
        let (p, _) = prepare_with_graph(frame, &trained.target, &trained.train)?;
        Ok(p)
    }
}

fn synth_spec(text: &str) -> Result<SynthSpec, CliError> {
    let mut s = SynthSpec::default();
    for (line, k, v) in parse_lines(text)? {
        let bad = || CliError::usage(format!("spec line {line}: bad value {v:?} for {k}"));
        macro_rules! num {
            ($f:ident) => {
                s.$f = v.parse().map_err(|_| bad())?
            };
        }
        match k.as_str() {
            "weeks" => num!(weeks),
            "predictors" => num!(predictors),
            "period" => num!(period),
            "noise" => num!(noise),
            "driver" => num!(driver),
            "driver_lag" => num!(driver_lag),
            "baseline" => num!(baseline),
            "amplitude" => num!(amplitude),
            "wiggle" => num!(wiggle),
            "ar_coef" => num!(ar_coef),
            "distractor_seasonality" => num!(distractor_seasonality),
            "start_year" => num!(start_year),
            "start_week" => num!(start_week),
            _ => return Err(CliError::usage(format!("spec line {line}: unknown key {k:?}"))),
        }
    }
    s.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(s)
}

pub fn cmd_synth(mut run: Run, spec: Option<&Path>) -> Result<(), CliError> {
    let spec = match spec {
        Some(p) => {
            run.input(p);
            synth_spec(&fs::read_to_string(p)?)?
        }
        None => SynthSpec::default(),
    };
    let (table, truth) = synth_generate(&spec, run.cfg.train.seed).map_err(|e| CliError::usage(e.to_string()))?;
    let mut buf = Vec::new();
    write_canonical(&table, &mut buf)?;
    run.write(TABLE_FILE, &buf)?;
    #[derive(Serialize)]
    struct Meta<'a> {
        spec: &'a SynthSpec,
        truth: &'a epigraph::dataprep::SynthTruth,
    }
    run.write_json("truth.json", &Meta { spec: &spec, truth: &truth })?;
    println!(
        "wrote {} weeks x {} variables; driver column {}",
        table.len(),
        table.variables.len(),
        truth.driver_column
    );
    run.finish()
}

pub fn cmd_ingest(mut run: Run) -> Result<(), CliError> {
    let surv = run
        .cfg
        .surveillance
        .clone()
        .ok_or_else(|| CliError::usage("ingest needs a surveillance file"))?;
    let (weather, air) = (run.cfg.weather.clone(), run.cfg.air_quality.clone());
    let (table, report) = ingest_files(
        &surv,
        weather.as_deref(),
        air.as_deref(),
        &run.cfg.aggregation,
        run.cfg.max_gap,
    )?;
    for p in [Some(surv), weather, air].into_iter().flatten() {
        run.input(&p);
    }
    let mut buf = Vec::new();
    write_canonical(&table, &mut buf)?;
    run.write(TABLE_FILE, &buf)?;
    run.write_json("ingest_report.json", &report)?;
    println!(
        "{} weeks {}..{}; {} dropped, {} imputed cells",
        report.weeks,
        report.first_week,
        report.last_week,
        report.dropped_weeks.len(),
        report.imputed.len()
    );
    run.finish()
}

pub fn cmd_graph(mut run: Run) -> Result<(), CliError> {
    let frame = run.load_frame()?;
    let (prepared, graph) = prepare_with_graph(&frame, &run.cfg.target, &run.cfg.train)?;
    let ckpt = run.checkpoint_path();
    let gates = if ckpt.exists() {
        let (model, _) = run.load_model()?;
        if model.feature_names != prepared.feature_names {
            return Err(CliError::usage("checkpoint features differ from the table"));
        }
        gate_values(&model.params)?
    } else {
        vec![0.5; prepared.n_features()]
    };
    let k = top_k_count(gates.len(), run.cfg.train.keep_fraction)?;
    let selected = select_top_k(&gates, k)?;
    let mask: Vec<bool> = (0..gates.len()).map(|i| selected.contains(&i)).collect();
    let mut buf = Vec::new();
    graph.write_edges(&mut buf)?;
    run.write("graph_edges.csv", &buf)?;
    let mut buf = Vec::new();
    write_mask(&graph.node_names, &gates, &mask, &mut buf)?;
    run.write("graph_mask.csv", &buf)?;
    println!("{} nodes, {} edges, {k} selected", graph.len(), graph.edges().len());
    run.finish()
}

pub fn cmd_train(mut run: Run) -> Result<(), CliError> {
    let frame = run.load_frame()?;
    let cfg = run.cfg.train.clone();
    let (prepared, graph) = prepare_with_graph(&frame, &run.cfg.target, &cfg)?;
    let (model, log) = train(&cfg, &prepared, graph)?;
    let mut buf = Vec::new();
    model.write_checkpoint(&mut buf, &run.cfg.to_json())?;
    let path = run.cfg.checkpoint.clone();
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&p, &buf)?;
            run.artifacts.push(p);
        }
        None => {
            run.write(CHECKPOINT_FILE, &buf)?;
        }
    }
    run.write_json("train_log.json", &log)?;
    let mut csv = String::from("epoch,steps,train_loss,val_loss\n");
    for e in &log.epochs {
        csv.push_str(&format!("{},{},{:?},{:?}\n", e.epoch, e.steps, e.train_loss, e.val_loss));
    }
    run.write("train_log.csv", csv.as_bytes())?;
    println!(
        "trained {} epochs ({} steps); best validation MSE {:.6e} at epoch {}",
        log.epochs.len(),
        log.steps,
        log.best_val_loss,
        log.best_epoch
    );
    run.finish()
}

fn chart_for_origin(prepared: &Prepared, rep: &ForecastReport, origin: usize, w: usize) -> String {
    let first = prepared.week_index[0];
    let observed: Vec<(f64, f64)> = (origin.saturating_sub(w)..origin + rep.horizon)
        .filter_map(|i| {
            let r = i.checked_sub(first)?;
            prepared.target.get(r).map(|y| (i as f64, *y))
        })
        .collect();
    let forecast: Vec<(f64, f64)> = rep
        .rows
        .iter()
        .filter(|r| r.origin_index == origin)
        .map(|r| ((r.origin_index + r.step - 1) as f64, r.y_pred))
        .collect();
    let title = match rep.rows.iter().find(|r| r.origin_index == origin).and_then(|r| r.origin_week) {
        Some(wk) => format!("origin {origin} ({wk})"),
        None => format!("origin {origin}"),
    };
    line_chart(
        &title,
        "week index",
        "cases",
        &[
            Series {
                label: "observed".into(),
                color: OBSERVED.into(),
                points: observed,
                dashed: false,
            },
            Series {
                label: format!("{}-week forecast", rep.horizon),
                color: horizon_color(rep.horizon).into(),
                points: forecast,
                dashed: true,
            },
        ],
    )
}

fn overview_chart(prepared: &Prepared, rep: &ForecastReport) -> String {
    let first = prepared.week_index[0];
    let observed: Vec<(f64, f64)> = (rep.test_start..=rep.test_end)
        .filter_map(|i| prepared.target.get(i.checked_sub(first)?).map(|y| (i as f64, *y)))
        .collect();
    let mut series = vec![Series {
        label: "observed".into(),
        color: OBSERVED.into(),
        points: observed,
        dashed: false,
    }];
    for step in [1, rep.horizon] {
        let pts: Vec<(f64, f64)> = rep
            .rows
            .iter()
            .filter(|r| r.step == step)
            .map(|r| ((r.origin_index + r.step - 1) as f64, r.y_pred))
            .collect();
        series.push(Series {
            label: format!("step {step} of {}", rep.horizon),
            color: horizon_color(rep.horizon).into(),
            points: pts,
            dashed: step != 1,
        });
        if rep.horizon == 1 {
            break;
        }
    }
    line_chart(
        &format!("walk-forward forecasts, horizon {}", rep.horizon),
        "week index",
        "cases",
        &series,
    )
}

pub fn cmd_eval(mut run: Run) -> Result<(), CliError> {
    let (model, trained) = run.load_model()?;
    let frame = run.load_frame()?;
    let prepared = run.prepare_like(&frame, &trained)?;
    let t = &run.cfg.train;
    let rep = walk_forward(&model, &prepared, t.test_start, t.test_end, t.tail_policy)?;
    let summary = summarize(&rep)?;
    let h = rep.horizon;
    let mut buf = Vec::new();
    write_forecast_csv(&rep, &mut buf)?;
    run.write(&format!("forecast_h{h}.csv"), &buf)?;
    let mut buf = Vec::new();
    write_metrics_csv(std::slice::from_ref(&summary), &mut buf)?;
    run.write(&format!("metrics_h{h}.csv"), &buf)?;
    run.write_json(
        &format!("metrics_h{h}.json"),
        &serde_json::json!({
            "config": run.cfg.to_json(),
            "seeds": [model.seed],
            "metrics": summary,
        }),
    )?;
    run.write(&format!("forecast_h{h}.svg"), overview_chart(&prepared, &rep).as_bytes())?;
    if run.cfg.charts {
        for o in rep.origins() {
            let svg = chart_for_origin(&prepared, &rep, o, model.config.window);
            run.write(&format!("charts/h{h}_origin_{o}.svg"), svg.as_bytes())?;
        }
    }
    let m = &summary.overall;
    println!(
        "horizon {h}: {} forecasts, MAPE {:.4} MAE {:.4} MSE {:.4} RSE {:.4}",
        m.n, m.mape, m.mae, m.mse, m.rse
    );
    run.finish()
}

pub fn cmd_forecast(mut run: Run) -> Result<(), CliError> {
    let (model, trained) = run.load_model()?;
    let frame = run.load_frame()?;
    let prepared = run.prepare_like(&frame, &trained)?;
    let (w, h) = (model.config.window, model.config.horizon);
    let sample = prepared.sample_at(prepared.len(), w, h)?;
    let preds = model.forecast(&sample)?;
    let last: MmwrWeek = *prepared
        .weeks
        .last()
        .ok_or_else(|| CliError::usage("empty table"))?;
    let mut csv = String::from("week,week_start,step,y_pred\n");
    let mut wk = last;
    for (k, p) in preds.iter().enumerate() {
        wk = wk.next();
        csv.push_str(&format!("{wk},{},{},{p:?}\n", wk.start.format("%Y-%m-%d"), k + 1));
    }
    print!("{csv}");
    run.write(&format!("forecast_latest_h{h}.csv"), csv.as_bytes())?;
    run.finish()
}

pub fn cmd_importance(mut run: Run) -> Result<(), CliError> {
    let frame = run.load_frame()?;
    let base = run.cfg.train.clone();
    let horizons = if run.cfg.importance_horizons.is_empty() {
        vec![base.horizon]
    } else {
        run.cfg.importance_horizons.clone()
    };
    let seeds: Vec<u64> = (0..run.cfg.importance_seeds as u64).map(|i| base.seed + i).collect();
    let threads = worker_threads();
    let mut reports = Vec::new();
    for &h in &horizons {
        let cfg = TrainConfig { horizon: h, ..base.clone() };
        cfg.validate()?;
        let (prepared, graph) = prepare_with_graph(&frame, &run.cfg.target, &cfg)?;
        log::info!("importance: horizon {h}, {} seeds on {threads} threads", seeds.len());
        reports.push(importance(&cfg, &prepared, &graph, &seeds, threads)?);
    }
    let mut buf = Vec::new();
    write_importance_csv(&reports, &mut buf)?;
    run.write("importance.csv", &buf)?;
    run.write_json(
        "importance.json",
        &serde_json::json!({
            "config": run.cfg.to_json(),
            "seeds": seeds,
            "reports": reports,
        }),
    )?;
    for r in &reports {
        let top: Vec<String> = r
            .features
            .iter()
            .take(r.k)
            .map(|f| format!("{} ({:.2})", f.name, f.frequency))
            .collect();
        println!("horizon {}: {}", r.horizon, top.join(", "));
    }
    run.finish()
}

pub fn cmd_gradcheck(mut run: Run) -> Result<(), CliError> {
    let checks = layer_grad_checks(run.cfg.train.seed)?;
    for c in &checks {
        println!(
            "{:<8} max rel error {:.3e}  {}",
            c.layer,
            c.report.worst(),
            if c.passed() { "ok" } else { "FAILED" }
        );
    }
    run.write_json("gradcheck.json", &checks)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.layer.as_str()).collect();
    run.finish()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::new(CHECK_FAILED, format!("gradient check failed for {}", failed.join(", "))))
    }
}
