//! Acceptance suite. Each criterion runs in sequence, prints one
//! PASS/FAIL line with its runtime, and the process exits non-zero if any
//! criterion failed. Criterion numbers given as arguments select a subset.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use chrono::{Datelike, Duration as Days, NaiveDate, Weekday};
use epigraph::dataprep::{
    difference, inverse_difference, mmwr_week_of, synth_generate, Frame, SynthSpec,
    TARGET_NAME,
};
use epigraph::graphnet::{build_graph, gate_forward, pearson_matrix, top_k_count};
use epigraph::seq2seq::{layer_grad_checks, Mode, ModelState, TransformerConfig, CHECK_TOLERANCE};
use epigraph::tensor::{seeded_rng, Bound, ParamMap, Tape};
use epigraph::trainer::{
    importance, metrics, prepare_with_graph, summarize, train, walk_forward, MetricsReport,
    MetricsSummary, TailPolicy, TrainConfig,
};
use rand::Rng;

const KEEP: f64 = 0.10;
const THRESHOLD: f64 = 0.05;

/// Reports gathered along the way so the metric invariant can be checked on
/// every one of them.
#[derive(Default)]
struct Shared {
    summaries: Vec<MetricsSummary>,
    criterion7: Option<Duration>,
}

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Duration,
    run: fn(&mut Shared) -> Result<String>,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "gradient integrity", limit: secs(60), run: gradient_integrity },
        Criterion { id: 2, name: "exact inverses", limit: secs(5), run: exact_inverses },
        Criterion { id: 3, name: "graph correctness", limit: secs(10), run: graph_correctness },
        Criterion { id: 4, name: "gate cardinality", limit: secs(5), run: gate_cardinality },
        Criterion { id: 5, name: "causality and leakage", limit: secs(30), run: causality },
        Criterion { id: 6, name: "overfit capacity", limit: secs(180), run: overfit_capacity },
        Criterion { id: 7, name: "synthetic forecasting skill", limit: secs(600), run: forecasting_skill },
        Criterion { id: 8, name: "feature recovery", limit: secs(900), run: feature_recovery },
        Criterion { id: 9, name: "determinism", limit: secs(1200), run: determinism },
        Criterion { id: 10, name: "metric oracles", limit: secs(5), run: metric_oracles },
        Criterion { id: 11, name: "MMWR calendar", limit: secs(10), run: mmwr_calendar },
    ];
    // `cargo test --test acceptance -- 6 9` runs a subset; cargo's own
    // flags are ignored.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut shared = Shared::default();
    let mut failed = Vec::new();
    let mut ran = 0;
    println!();
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| (c.run)(&mut shared)))
            .unwrap_or_else(|_| Err(anyhow::anyhow!("panicked")));
        let elapsed = start.elapsed();
        // Criterion 9's budget is relative to criterion 7.
        let limit = match (c.id, shared.criterion7) {
            (9, Some(t7)) => 2 * t7,
            _ => c.limit,
        };
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d}; over time budget of {:.0} s", limit.as_secs_f64())),
            Err(e) => (false, format!("{e:#}")),
        };
        println!(
            "acceptance {:>2} {:<28} {} ({:.1} s) {}",
            c.id,
            c.name,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            detail
        );
        if !ok {
            failed.push(c.id);
        }
    }
    println!();
    if failed.is_empty() {
        println!("acceptance: all {ran} criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

// 1 -------------------------------------------------------------------------

fn gradient_integrity(_: &mut Shared) -> Result<String> {
    let checks = layer_grad_checks(0)?;
    let mut parts = Vec::new();
    for c in &checks {
        let worst = c.report.worst();
        ensure!(c.passed(), "{} layer: max relative error {worst:.2e}", c.layer);
        ensure!(worst < CHECK_TOLERANCE, "{} layer: {worst:.2e}", c.layer);
        parts.push(format!("{} {worst:.1e}", c.layer));
    }
    ensure!(checks.len() == 5, "expected five layer groups, got {}", checks.len());
    Ok(format!("max rel error: {}", parts.join(", ")))
}

// 2 -------------------------------------------------------------------------

fn exact_inverses(_: &mut Shared) -> Result<String> {
    let mut rng = seeded_rng(2);
    for i in 0..1000 {
        let n = rng.gen_range(2..80);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1_000_000i64..1_000_000) as f64).collect();
        let back = inverse_difference(&difference(&y)?, y[0]);
        ensure!(back[..] == y[1..], "integer series {i} did not round-trip");
    }
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..80);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let back = inverse_difference(&difference(&y)?, y[0]);
        for (a, b) in back.iter().zip(&y[1..]) {
            worst = worst.max((a - b).abs() / (1.0 + b.abs()));
        }
    }
    ensure!(worst <= 1e-9, "real series drift {worst:.2e}");

    // Anchoring: the first level is the first difference plus the last
    // observed value, every later level adds onto the previous one.
    let cfg = small_cfg(4);
    let frame = synth_frame(&SynthSpec { weeks: 120, predictors: 3, driver: 1, ..SynthSpec::default() }, 5)?;
    let (p, g) = prepare_with_graph(&frame, TARGET_NAME, &cfg)?;
    let model = ModelState::new(cfg.model_config(), &p, g, 3)?;
    let mut checked = 0;
    for t in [cfg.test_start, cfg.test_start + 7, cfg.test_end - cfg.horizon] {
        let row = p.row_of(t).context("origin outside table")?;
        let s = p.sample_at(row, cfg.window(), cfg.horizon)?;
        ensure!(s.last_observed == p.target[row - 1], "anchor is not y(t-1)");
        let deltas = model.predict_deltas(&s.inputs, &s.decoder_inputs, 1)?;
        let levels = model.forecast(&s)?;
        let mut prev = s.last_observed;
        for (h, (&d, &y)) in deltas.iter().zip(&levels).enumerate() {
            let expect = p.unscale_delta(d)? + prev;
            ensure!(y == expect, "origin {t} step {}: {y} vs {expect}", h + 1);
            prev = y;
            checked += 1;
        }
    }
    Ok(format!(
        "1000 integer series bit-exact, 1000 real series within {worst:.1e}, {checked} anchored steps exact"
    ))
}

// 3 -------------------------------------------------------------------------

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn graph_correctness(_: &mut Shared) -> Result<String> {
    let mut rng = seeded_rng(3);
    let mut worst = 0.0f64;
    for t in 0..50 {
        let rows = rng.gen_range(8..60);
        let cols = rng.gen_range(2..12);
        let table: Vec<Vec<f64>> =
            (0..cols).map(|_| (0..rows).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        let rho = pearson_matrix(&table)?;
        for u in 0..cols {
            for v in 0..cols {
                let o = if u == v { 1.0 } else { oracle_pearson(&table[u], &table[v]) };
                let e = (rho[u][v] - o).abs();
                ensure!(e < 1e-12, "table {t} ({u},{v}) off by {e:.2e}");
                worst = worst.max(e);
            }
        }
        let names: Vec<String> = (0..cols).map(|i| format!("v{i}")).collect();
        let g = build_graph(&names, &rho, THRESHOLD)?;
        for u in 0..cols {
            for v in 0..cols {
                let expect = if u == v {
                    1.0
                } else if rho[u][v].abs() >= THRESHOLD {
                    rho[u][v].abs()
                } else {
                    0.0
                };
                ensure!(g.weight(u, v) == expect, "table {t} edge ({u},{v})");
            }
        }
    }
    let names: Vec<String> = (0..4).map(|i| format!("b{i}")).collect();
    let below = THRESHOLD - 1e-9;
    let rho = vec![
        vec![1.0, THRESHOLD, -THRESHOLD, below],
        vec![THRESHOLD, 1.0, -below, 0.0],
        vec![-THRESHOLD, -below, 1.0, 0.7],
        vec![below, 0.0, 0.7, 1.0],
    ];
    let g = build_graph(&names, &rho, THRESHOLD)?;
    ensure!(g.weight(0, 1) == THRESHOLD, "|rho| = 0.05 must be kept");
    ensure!(g.weight(0, 2) == THRESHOLD, "rho = -0.05 must be kept");
    ensure!(g.weight(0, 3) == 0.0 && g.weight(1, 2) == 0.0, "|rho| < 0.05 must be dropped");
    ensure!(g.weight(2, 3) == 0.7, "strong edge lost");
    Ok(format!("50 tables, max error {worst:.1e}; boundary at 0.05 kept, below dropped"))
}

// 4 -------------------------------------------------------------------------

fn gate_cardinality(_: &mut Shared) -> Result<String> {
    let mut rng = seeded_rng(4);
    let mut seen = Vec::new();
    for m in [10usize, 50, 133, 190] {
        let k = (KEEP * m as f64).ceil() as usize;
        ensure!(top_k_count(m, KEEP)? == k, "M={m}: k={}", top_k_count(m, KEEP)?);
        for pass in 0..20 {
            let mut tape = Tape::new();
            let h = tape.constant(&[2, m, 3], (0..2 * m * 3).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
            let logits: Vec<f64> = match pass {
                // all ties, then heavy duplication
                0 => vec![0.0; m],
                1 => (0..m).map(|i| (i % 3) as f64).collect(),
                _ => (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            };
            let l = tape.param(&[m], logits)?;
            let out = gate_forward(&mut tape, h, l, KEEP)?;
            let kept = out.mask.iter().filter(|b| **b).count();
            ensure!(kept == k && out.selected.len() == k, "M={m} pass {pass}: kept {kept}");
        }
        seen.push(format!("M={m}:{k}"));
    }
    ensure!(top_k_count(190, KEEP)? == 19, "M=190 must keep 19");
    Ok(format!("20 passes each, kept {}", seen.join(" ")))
}

// 5 -------------------------------------------------------------------------

fn causality(_: &mut Shared) -> Result<String> {
    // Decoder self-attention: bumping position j leaves positions < j unchanged.
    let tf = TransformerConfig {
        d_model: 8,
        n_heads: 2,
        d_ff: 8,
        dropout: 0.0,
        encoder_layers: 2,
        decoder_layers: 2,
    };
    let mut params = ParamMap::new();
    tf.init(&mut seeded_rng(5), &mut params)?;
    let (b, w, we, d) = (2, 8, 6, tf.d_model);
    let mut rng = seeded_rng(55);
    let y: Vec<f64> = (0..b * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let enc: Vec<f64> = (0..b * we * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let decode = |y: &[f64]| -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = Bound::bind(&mut tape, &params);
        let yv = tape.constant(&[b, w], y.to_vec())?;
        let z = tape.constant(&[b, we, d], enc.clone())?;
        let mut r = seeded_rng(0);
        let mut mode = Mode { training: false, rng: &mut r };
        let (out, _, _) = tf.decode(&mut tape, &bound, yv, z, &mut mode)?;
        Ok(tape.value(out).to_vec())
    };
    let base = decode(&y)?;
    let mut compared = 0usize;
    for j in 0..w {
        let mut yp = y.clone();
        for s in 0..b {
            yp[s * w + j] += 1e3;
        }
        let out = decode(&yp)?;
        for s in 0..b {
            for i in 0..j {
                let r = (s * w + i) * d..(s * w + i + 1) * d;
                ensure!(out[r.clone()] == base[r], "decoder position {i} saw position {j}");
                compared += d;
            }
        }
    }

    // Walk-forward: rewriting every raw value from week t on never changes
    // forecasts made at origins <= t.
    let cfg = small_cfg(2);
    let frame = synth_frame(&SynthSpec { weeks: 120, predictors: 3, driver: 1, ..SynthSpec::default() }, 9)?;
    let (p, g) = prepare_with_graph(&frame, TARGET_NAME, &cfg)?;
    let model = ModelState::new(cfg.model_config(), &p, g, 1)?;
    let base = walk_forward(&model, &p, cfg.test_start, cfg.test_end, TailPolicy::Skip)?;
    let mut origins = 0usize;
    for t in (cfg.test_start..cfg.test_end).step_by(3) {
        let mut f = frame.clone();
        for col in f.columns.iter_mut() {
            for v in col[t - 1..].iter_mut() {
                *v = *v * 7.0 + 1e5;
            }
        }
        let (pp, _) = prepare_with_graph(&f, TARGET_NAME, &cfg)?;
        let rep = walk_forward(&model, &pp, cfg.test_start, cfg.test_end, TailPolicy::Skip)?;
        for (a, r) in base.rows.iter().zip(&rep.rows) {
            if a.origin_index <= t {
                let delta = (a.y_pred - r.y_pred).abs();
                ensure!(delta == 0.0, "origin {} moved by {delta:e} after week {t} changed", a.origin_index);
                origins += 1;
            }
        }
    }
    Ok(format!("{compared} decoder values and {origins} walk-forward forecasts unchanged (|delta| = 0)"))
}

// 6 -------------------------------------------------------------------------

fn overfit_capacity(_: &mut Shared) -> Result<String> {
    let spec = SynthSpec { weeks: 120, predictors: 3, driver: 1, noise: 0.0, wiggle: 0.0, ..SynthSpec::default() };
    let frame = synth_frame(&spec, 3)?;
    let cfg = TrainConfig {
        horizon: 2,
        train_end: 120,
        test_start: 121,
        test_end: 121,
        max_epochs: 100_000,
        patience: 100_000,
        max_steps: Some(2000),
        track_train_mse: true,
        dropout: 0.0,
        learning_rate: 1e-4,
        ..desk_cfg()
    };
    let (p, g) = prepare_with_graph(&frame, TARGET_NAME, &cfg)?;
    let (_, log) = train(&cfg, &p, g)?;
    ensure!(log.steps <= 2000, "took {} steps", log.steps);
    let best = log
        .epochs
        .iter()
        .filter_map(|e| e.train_mse.map(|m| (e.steps, m)))
        .find(|(_, m)| *m < 1e-3);
    let last = log.epochs.last().and_then(|e| e.train_mse).unwrap_or(f64::NAN);
    match best {
        Some((steps, mse)) => Ok(format!(
            "training MSE {mse:.2e} after {steps} steps, {last:.2e} after {} steps",
            log.steps
        )),
        None => bail!("training MSE never below 1e-3 in {} steps (last {last:.2e})", log.steps),
    }
}

// 7 -------------------------------------------------------------------------

fn skill_spec() -> SynthSpec {
    SynthSpec { weeks: 400, predictors: 4, driver: 2, ..SynthSpec::default() }
}

fn skill_cfg(horizon: usize) -> TrainConfig {
    TrainConfig { horizon, train_end: 310, test_start: 330, test_end: 400, ..desk_cfg() }
}

fn forecasting_skill(shared: &mut Shared) -> Result<String> {
    let start = Instant::now();
    let frame = synth_frame(&skill_spec(), 7)?;
    let mut mape = BTreeMap::new();
    for h in [2usize, 16] {
        let cfg = skill_cfg(h);
        let (p, g) = prepare_with_graph(&frame, TARGET_NAME, &cfg)?;
        let (model, _) = train(&cfg, &p, g)?;
        let rep = walk_forward(&model, &p, cfg.test_start, cfg.test_end, TailPolicy::Skip)?;
        let s = summarize(&rep)?;
        mape.insert(h, s.overall.mape);
        shared.summaries.push(s);
    }
    shared.criterion7 = Some(start.elapsed());
    let (m2, m16) = (mape[&2], mape[&16]);
    let detail = format!("MAPE H=2 {m2:.4} (<= 0.15), H=16 {m16:.4} (<= 0.30)");
    ensure!(m2 <= 0.15 && m16 <= 0.30, "{detail}");
    Ok(detail)
}

// 8 -------------------------------------------------------------------------

fn feature_recovery(_: &mut Shared) -> Result<String> {
    let (table, truth) = synth_generate(&skill_spec(), 7)?;
    let frame = table.to_frame()?;
    let cfg = skill_cfg(2);
    let (p, g) = prepare_with_graph(&frame, TARGET_NAME, &cfg)?;
    let seeds: Vec<u64> = (0..20).collect();
    let report = importance(&cfg, &p, &g, &seeds, epigraph::trainer::worker_threads())?;
    let freq = report.frequency_of(&truth.driver_column).unwrap_or(0.0);
    let top: Vec<String> = report
        .features
        .iter()
        .take(3)
        .map(|f| format!("{} {:.2}", f.name, f.frequency))
        .collect();
    let detail = format!(
        "driver {} selected in {:.0}% of 20 seeds (>= 90%); most frequent: {}",
        truth.driver_column,
        100.0 * freq,
        top.join(", ")
    );
    ensure!(freq >= 0.90, "{detail}");
    Ok(detail)
}

// 9 -------------------------------------------------------------------------

fn cli(args: &[&str]) -> Result<()> {
    let argv = std::iter::once("epigraph").chain(args.iter().copied());
    let code = epigraph_cli::main_with_args(argv);
    ensure!(code == 0, "`epigraph {}` exited with {code}", args.join(" "));
    Ok(())
}

fn files_under(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root)?.to_path_buf(), fs::read(&path)?);
            }
        }
    }
    Ok(out)
}

fn determinism(_: &mut Shared) -> Result<String> {
    let dir = tempfile::tempdir()?;
    let spec = skill_spec();
    let spec_file = dir.path().join("spec.txt");
    fs::write(
        &spec_file,
        format!("weeks = {}\npredictors = {}\ndriver = {}\n", spec.weeks, spec.predictors, spec.driver),
    )?;
    let data = dir.path().join("data");
    cli(&["--seed", "7", "--out", s(&data), "synth", "--spec", s(&spec_file)])?;
    let table = data.join("table.csv");
    let c = skill_cfg(2);
    let config = dir.path().join("run.conf");
    fs::write(
        &config,
        format!(
            "horizon = 2\ntrain_end = {}\ntest_start = {}\ntest_end = {}\nd_model = {}\nn_heads = {}\n\
             d_ff = {}\nd_node = {}\ngat_heads = {}\ncharts = true\n",
            c.train_end, c.test_start, c.test_end, c.d_model, c.n_heads, c.d_ff, c.d_node, c.gat_heads
        ),
    )?;
    let mut runs = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        let common = ["--config", s(&config), "--out", s(&out)];
        cli(&[&common[..], &["train", "--data", s(&table)]].concat())?;
        cli(&[&common[..], &["eval", "--data", s(&table)]].concat())?;
        let mut files = files_under(&out)?;
        // the manifest records timestamps and absolute paths; its digests are compared below
        let manifest: serde_json::Value =
            serde_json::from_slice(&files.remove(Path::new("manifest.json")).context("no manifest")?)?;
        let digests: Vec<serde_json::Value> = manifest["artifacts"]
            .as_array()
            .context("manifest lists no artifacts")?
            .iter()
            .map(|a| a["sha256"].clone())
            .collect();
        runs.push((files, digests));
    }
    let (a, b) = (&runs[0], &runs[1]);
    ensure!(a.0.keys().eq(b.0.keys()), "runs wrote different file sets");
    for (path, bytes) in &a.0 {
        ensure!(b.0[path] == *bytes, "{} differs between runs", path.display());
    }
    ensure!(a.1 == b.1, "manifest digests differ");
    for required in ["model.json", "forecast_h2.csv", "metrics_h2.csv", "forecast_h2.svg"] {
        ensure!(a.0.contains_key(Path::new(required)), "missing {required}");
    }
    let svgs = a.0.keys().filter(|p| p.extension().is_some_and(|e| e == "svg")).count();
    Ok(format!("{} files byte-identical across two runs ({svgs} SVGs)", a.0.len()))
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

// 10 ------------------------------------------------------------------------

fn ref_mape(p: &[f64], y: &[f64]) -> f64 {
    let terms: Vec<f64> = p.iter().zip(y).filter(|(_, y)| **y != 0.0).map(|(p, y)| ((p - y) / y).abs()).collect();
    terms.iter().sum::<f64>() / terms.len() as f64
}

fn ref_mae(p: &[f64], y: &[f64]) -> f64 {
    p.iter().zip(y).map(|(p, y)| (p - y).abs()).sum::<f64>() / p.len() as f64
}

fn ref_mse(p: &[f64], y: &[f64]) -> f64 {
    p.iter().zip(y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / p.len() as f64
}

fn ref_rse(p: &[f64], y: &[f64]) -> f64 {
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let num: f64 = p.iter().zip(y).map(|(p, y)| (p - y).powi(2)).sum();
    let den: f64 = y.iter().map(|y| (y - ybar).powi(2)).sum();
    (num / den).sqrt()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + b.abs())
}

fn mae_mse_invariant(r: &MetricsReport) -> bool {
    r.mae * r.mae <= r.mse * (1.0 + 1e-12)
}

fn metric_oracles(shared: &mut Shared) -> Result<String> {
    let mut rng = seeded_rng(10);
    for v in 0..100 {
        let n = rng.gen_range(2..200);
        let y: Vec<f64> = (0..n)
            .map(|i| if i % 17 == 3 { 0.0 } else { rng.gen_range(-50.0..150.0) })
            .collect();
        let p: Vec<f64> = y.iter().map(|y| y + rng.gen_range(-20.0..20.0)).collect();
        let m = metrics(&p, &y)?;
        ensure!(close(m.mape, ref_mape(&p, &y)), "vector {v}: MAPE {} vs {}", m.mape, ref_mape(&p, &y));
        ensure!(close(m.mae, ref_mae(&p, &y)), "vector {v}: MAE");
        ensure!(close(m.mse, ref_mse(&p, &y)), "vector {v}: MSE");
        ensure!(close(m.rse, ref_rse(&p, &y)), "vector {v}: RSE");
        ensure!(mae_mse_invariant(&m), "vector {v}: MAE^2 > MSE");
    }
    let mut reports = 0;
    for s in &shared.summaries {
        for r in std::iter::once(&s.overall).chain(s.per_step.iter().map(|(_, r)| r)) {
            ensure!(mae_mse_invariant(r), "H={} report breaks MAE^2 <= MSE", s.horizon);
            reports += 1;
        }
    }
    Ok(format!("100 vectors within 1e-12; MAE^2 <= MSE on those and {reports} forecast reports"))
}

// 11 ------------------------------------------------------------------------

/// Walks Sunday-started weeks and gives each to the year holding at least
/// four of its days.
fn brute_force_weeks(from: NaiveDate, to: NaiveDate) -> Vec<(NaiveDate, i32, u32)> {
    let mut s = from;
    while s.weekday() != Weekday::Sun {
        s -= Days::days(1);
    }
    let mut out: Vec<(NaiveDate, i32, u32)> = Vec::new();
    while s <= to {
        let mut counts = BTreeMap::new();
        for k in 0..7 {
            *counts.entry((s + Days::days(k)).year()).or_insert(0) += 1;
        }
        let year = *counts.iter().find(|(_, c)| **c >= 4).expect("seven days").0;
        let week = match out.last() {
            Some((_, y, w)) if *y == year => w + 1,
            _ => 1,
        };
        out.push((s, year, week));
        s += Days::days(7);
    }
    out
}

fn mmwr_calendar(_: &mut Shared) -> Result<String> {
    let first = NaiveDate::from_ymd_opt(1990, 1, 1).unwrap();
    let last = NaiveDate::from_ymd_opt(2100, 12, 31).unwrap();
    let oracle = brute_force_weeks(first - Days::days(400), last);
    let mut i = 0;
    let mut d = first;
    let mut days = 0;
    while d <= last {
        while i + 1 < oracle.len() && oracle[i + 1].0 <= d {
            i += 1;
        }
        let (start, year, week) = oracle[i];
        let w = mmwr_week_of(d)?;
        ensure!((w.start, w.year, w.week) == (start, year, week), "{d}: got {}-W{}", w.year, w.week);
        d += Days::days(1);
        days += 1;
    }
    Ok(format!("{days} dates agree"))
}

// fixtures ------------------------------------------------------------------

/// Desk-scale model: the same architecture as the defaults at a width a
/// single CPU core trains in seconds.
fn desk_cfg() -> TrainConfig {
    TrainConfig { d_model: 32, n_heads: 4, d_ff: 32, d_node: 8, gat_heads: 2, ..TrainConfig::default() }
}

fn small_cfg(horizon: usize) -> TrainConfig {
    TrainConfig {
        horizon,
        train_end: 80,
        test_start: 90,
        test_end: 120,
        d_model: 8,
        n_heads: 2,
        d_ff: 8,
        d_node: 4,
        gat_heads: 2,
        gat_layers: 1,
        encoder_layers: 1,
        decoder_layers: 1,
        ..TrainConfig::default()
    }
}

fn synth_frame(spec: &SynthSpec, seed: u64) -> Result<Frame> {
    Ok(synth_generate(spec, seed)?.0.to_frame()?)
}
