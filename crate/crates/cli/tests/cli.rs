use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn epigraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epigraph"))
        .args(args)
        .env("EPIGRAPH_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = "\
horizon = 2
train_end = 80
test_start = 90
test_end = 120
max_epochs = 2
d_model = 8
n_heads = 2
d_ff = 8
d_node = 4
gat_heads = 2
gat_layers = 1
encoder_layers = 1
decoder_layers = 1
charts = true
";

fn synth_table(dir: &Path, weeks: usize) -> std::path::PathBuf {
    let spec = dir.join("spec.txt");
    fs::write(&spec, format!("weeks = {weeks}\npredictors = 3\ndriver = 1\n")).unwrap();
    let out = dir.join("data");
    let o = epigraph(&["synth", "--spec", s(&spec), "--seed", "4", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.join("table.csv")
}

#[test]
fn synth_default_spec_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = epigraph(&["synth", "--seed", "11", "--out", s(d)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let ta = fs::read_to_string(a.join("table.csv")).unwrap();
    assert_eq!(ta, fs::read_to_string(b.join("table.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("truth.json")).unwrap(),
        fs::read(b.join("truth.json")).unwrap()
    );
    let mut lines = ta.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 3 + 5);
    assert_eq!(lines.count(), 200);
    assert!(a.join("config.resolved").exists() && a.join("manifest.json").exists());

    let spec = dir.path().join("lag3.txt");
    fs::write(&spec, "driver_lag = 3\ndriver = 2\n").unwrap();
    let c = dir.path().join("c");
    assert_eq!(code(&epigraph(&["synth", "--spec", s(&spec), "--out", s(&c)])), 0);
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(c.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["truth"]["driver_column"], "X3 (-3)");

    fs::write(&spec, "driver = 9\n").unwrap();
    assert_eq!(code(&epigraph(&["synth", "--spec", s(&spec), "--out", s(&c)])), 2);
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "horizon = 2\nnot_a_key = 1\n").unwrap();
    let o = epigraph(&["--config", s(&cfg), "gradcheck", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("not_a_key"));
    assert_eq!(code(&epigraph(&["--horizon", "3", "gradcheck"])), 2);
    assert_eq!(code(&epigraph(&["frobnicate"])), 2);
    fs::write(&cfg, "seed = 1\n").unwrap();
    let o = epigraph(&["--config", s(&cfg), "--seed", "2", "gradcheck", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("conflicts"));
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = epigraph(&["gradcheck", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for layer in ["gate", "gatv2", "encoder", "decoder", "head"] {
        assert!(text.contains(layer));
    }
    assert!(dir.path().join("gradcheck.json").exists());
}

#[test]
fn missing_checkpoint_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let table = synth_table(dir.path(), 60);
    let out = dir.path().join("run");
    let o = epigraph(&["eval", "--data", s(&table), "--out", s(&out)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let o = epigraph(&["train", "--data", s(&dir.path().join("nope.csv")), "--out", s(&out)]);
    assert_eq!(code(&o), 4);
}

#[test]
fn train_eval_forecast_graph_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let table = synth_table(dir.path(), 120);
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("run");
    let base = ["--config", s(&cfg), "--out", s(&out), "--data", s(&table)];
    let o = epigraph(&[&["train"], &base[..]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("model.json").exists());

    let o = epigraph(&[&["eval"], &base[..]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read(out.join("forecast_h2.svg")).unwrap();
    let per_origin = fs::read(out.join("charts/h2_origin_90.svg")).unwrap();
    let forecast = fs::read(out.join("forecast_h2.csv")).unwrap();
    let o = epigraph(&[&["eval"], &base[..]].concat());
    assert_eq!(code(&o), 0);
    assert_eq!(svg, fs::read(out.join("forecast_h2.svg")).unwrap());
    assert_eq!(per_origin, fs::read(out.join("charts/h2_origin_90.svg")).unwrap());
    assert_eq!(forecast, fs::read(out.join("forecast_h2.csv")).unwrap());
    let charts = fs::read_dir(out.join("charts")).unwrap().count();
    assert_eq!(charts, 30);

    let metrics = fs::read_to_string(out.join("metrics_h2.csv")).unwrap();
    assert!(metrics.starts_with("horizon,step,n,mape,mae,mse,rse"));
    let resolved = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.contains("d_model = 8") && resolved.contains("learning_rate = 0.0001"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "eval");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);

    let o = epigraph(&[&["forecast"], &base[..]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().contains(",1,"));

    let o = epigraph(&[&["graph"], &base[..]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mask = fs::read_to_string(out.join("graph_mask.csv")).unwrap();
    assert_eq!(mask.lines().next(), Some("name,gate_value,selected"));
    assert_eq!(mask.lines().filter(|l| l.ends_with(",1")).count(), 3);
    let edges = fs::read_to_string(out.join("graph_edges.csv")).unwrap();
    assert_eq!(edges.lines().next(), Some("u_name,v_name,weight"));
}

#[test]
fn importance_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = synth_table(dir.path(), 120);
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, format!("{TINY}max_epochs = 1\n").replace("max_epochs = 2\n", "")).unwrap();
    let out = dir.path().join("imp");
    let o = epigraph(&["importance", "--config", s(&cfg), "--data", s(&table), "--seeds", "2", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("importance.csv")).unwrap();
    assert!(csv.starts_with("feature,rank_h2,"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("importance.json")).unwrap()).unwrap();
    assert_eq!(json["seeds"], serde_json::json!([0, 1]));
}

fn write_sources(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let surv = dir.join("surv.csv");
    fs::write(&surv, "mmwr_year,mmwr_week,cases\n2020,1,5\n2020,2,7\n2020,3,9\n2020,4,4\n").unwrap();
    let weather = dir.join("weather.csv");
    let mut w = String::from("date,Air Temp - Max,Precip Total\n");
    for d in 0..14 {
        let date = chrono::NaiveDate::from_ymd_opt(2020, 1, 5).unwrap() + chrono::Duration::days(d);
        w.push_str(&format!("{date},{},{}\n", 10 + d, d % 3));
    }
    fs::write(&weather, w).unwrap();
    (surv, weather)
}

#[test]
fn ingest_aggregates_and_aligns() {
    let dir = tempfile::tempdir().unwrap();
    let (surv, weather) = write_sources(dir.path());
    let out = dir.path().join("ing");
    let o = epigraph(&["ingest", "--surveillance", s(&surv), "--weather", s(&weather), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0], "week_start,mmwr_year,mmwr_week,cases,Air Temp - Max,Precip Total");
    assert_eq!(rows[1], "2020-01-05,2020,2,7.0,16.0,6.0");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("ingest_report.json")).unwrap()).unwrap();
    assert_eq!(report["dropped_weeks"].as_array().unwrap().len(), 2);
}

#[test]
fn ingest_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (surv, weather) = write_sources(dir.path());
    fs::write(&weather, "date,x\n2020-01-05,1\nnot-a-date,2\n").unwrap();
    let out = dir.path().join("ing");
    let o = epigraph(&["ingest", "--surveillance", s(&surv), "--weather", s(&weather), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("weather.csv") && stderr(&o).contains("line 3"));

    let gappy = dir.path().join("gappy.csv");
    let mut t = String::from("mmwr_year,mmwr_week,cases\n");
    for wk in 1..=10 {
        let v = if (2..=7).contains(&wk) { String::new() } else { wk.to_string() };
        t.push_str(&format!("2021,{wk},{v}\n"));
    }
    fs::write(&gappy, t).unwrap();
    let o = epigraph(&["ingest", "--surveillance", s(&gappy), "--out", s(&out)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}
