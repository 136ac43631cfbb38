use epigraph::dataprep::{synth_generate, Frame, SynthSpec, TARGET_NAME};
use epigraph::seq2seq::ModelState;
use epigraph::tensor::seeded_rng;
use epigraph::trainer::{
    importance, metrics, prepare_with_graph, summarize, train, training_windows, walk_forward,
    walk_forward_origins, write_forecast_csv, write_importance_csv, write_metrics_csv, TailPolicy,
    TrainConfig,
};
use epigraph::Error;
use proptest::prelude::*;
use rand::Rng;

fn small_cfg() -> TrainConfig {
    TrainConfig {
        horizon: 2,
        max_epochs: 3,
        patience: 20,
        train_end: 70,
        test_start: 80,
        test_end: 100,
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

fn synth_frame(weeks: usize, seed: u64) -> Frame {
    let spec = SynthSpec {
        weeks,
        predictors: 3,
        driver: 1,
        ..SynthSpec::default()
    };
    synth_generate(&spec, seed).unwrap().0.to_frame().unwrap()
}

/// Straight transcriptions of the metric definitions.
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

#[test]
fn metrics_agree_with_reference_formulas() {
    let mut rng = seeded_rng(5);
    for _ in 0..100 {
        let n = rng.gen_range(2..60);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..500.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..600.0)).collect();
        let m = metrics(&p, &y).unwrap();
        assert!((m.mape - ref_mape(&p, &y)).abs() < 1e-12);
        assert!((m.mae - ref_mae(&p, &y)).abs() < 1e-12 * m.mae.max(1.0));
        assert!((m.mse - ref_mse(&p, &y)).abs() < 1e-12 * m.mse.max(1.0));
        assert!((m.rse - ref_rse(&p, &y)).abs() < 1e-12);
        assert!(m.mae * m.mae <= m.mse * (1.0 + 1e-12));
        assert_eq!(m.zero_actuals, 0);
    }
}

#[test]
fn metrics_reject_mismatched_lengths() {
    assert!(matches!(metrics(&[1.0, 2.0], &[1.0]), Err(Error::Contract(_))));
    assert!(metrics(&[], &[]).is_err());
}

proptest! {
    #[test]
    fn mae_squared_never_exceeds_mse(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40)) {
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = metrics(&p, &y).unwrap();
        prop_assert!(m.mae * m.mae <= m.mse * (1.0 + 1e-12) + 1e-300);
        prop_assert!(m.mae >= 0.0 && m.mse >= 0.0 && m.rse >= 0.0);
    }
}

#[test]
fn training_is_bit_reproducible() {
    let cfg = small_cfg();
    let frame = synth_frame(110, 2);
    let (p, g) = prepare_with_graph(&frame, TARGET_NAME, &cfg).unwrap();
    let (a, la) = train(&cfg, &p, g.clone()).unwrap();
    let (b, lb) = train(&cfg, &p, g.clone()).unwrap();
    assert_eq!(la, lb);
    for (k, t) in &a.params {
        let bits = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(t.data()), bits(b.params[k].data()), "{k}");
    }
    let other = TrainConfig { seed: 9, ..cfg };
    let (c, _) = train(&other, &p, g).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn returned_checkpoint_is_best_on_validation() {
    let cfg = TrainConfig {
        max_epochs: 6,
        learning_rate: 3e-3,
        ..small_cfg()
    };
    let frame = synth_frame(110, 3);
    let (p, g) = prepare_with_graph(&frame, TARGET_NAME, &cfg).unwrap();
    let (model, log) = train(&cfg, &p, g).unwrap();
    let last = log.epochs.last().unwrap();
    assert!(log.best_val_loss <= last.val_loss);
    let min = log.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(log.best_val_loss, min);
    let (_, val) = training_windows(&cfg, &p).unwrap();
    let again = epigraph::trainer::dataset_mse(&model, &val, cfg.batch_size).unwrap();
    assert_eq!(again, log.best_val_loss);
}

#[test]
fn early_stopping_respects_patience() {
    let cfg = TrainConfig {
        max_epochs: 50,
        patience: 2,
        min_delta: 1e9,
        ..small_cfg()
    };
    let frame = synth_frame(110, 4);
    let (p, g) = prepare_with_graph(&frame, TARGET_NAME, &cfg).unwrap();
    let (_, log) = train(&cfg, &p, g).unwrap();
    assert!(log.stopped_early);
    assert_eq!(log.epochs.len(), 3);
    assert_eq!(log.best_epoch, 1);
}

#[test]
fn too_few_windows_is_a_contract_error() {
    let cfg = TrainConfig {
        train_end: 15,
        ..small_cfg()
    };
    let frame = synth_frame(60, 5);
    let (p, g) = prepare_with_graph(&frame, TARGET_NAME, &cfg).unwrap();
    assert!(matches!(train(&cfg, &p, g), Err(Error::Contract(_))));
}

#[test]
fn training_windows_stay_inside_the_training_split() {
    let cfg = small_cfg();
    let frame = synth_frame(110, 6);
    let (p, _) = prepare_with_graph(&frame, TARGET_NAME, &cfg).unwrap();
    let (fit, val) = training_windows(&cfg, &p).unwrap();
    for ds in [&fit, &val] {
        for &t in &ds.origin_index {
            assert!(t + cfg.horizon - 1 <= cfg.train_end);
        }
    }
    assert_eq!(val.len(), ((fit.len() + val.len()) as f64 * 0.1).ceil() as usize);
    assert!(fit.origin_index.last() < val.origin_index.first());
}

#[test]
fn origin_counting() {
    let o = walk_forward_origins(900, 991, 16, TailPolicy::Skip);
    assert_eq!((o[0], *o.last().unwrap(), o.len()), (900, 976, 77));
    let t = walk_forward_origins(900, 991, 16, TailPolicy::Truncate);
    assert_eq!(t.len(), 92);
    for h in [2, 4, 8, 16] {
        assert_eq!(walk_forward_origins(900, 991, h, TailPolicy::Skip).len(), 92 - h + 1);
    }
}

fn untrained(cfg: &TrainConfig, frame: &Frame) -> (ModelState, epigraph::dataprep::Prepared) {
    let (p, g) = prepare_with_graph(frame, TARGET_NAME, cfg).unwrap();
    (ModelState::new(cfg.model_config(), &p, g, 1).unwrap(), p)
}

#[test]
fn walk_forward_ignores_the_future() {
    let cfg = small_cfg();
    let frame = synth_frame(110, 7);
    let (model, p) = untrained(&cfg, &frame);
    let base = walk_forward(&model, &p, 80, 100, TailPolicy::Skip).unwrap();
    for t in [80usize, 87, 99] {
        let mut f = frame.clone();
        // canonical index i is frame row i - 1
        for col in f.columns.iter_mut() {
            for v in col[t - 1..].iter_mut() {
                *v = *v * 3.0 + 1e4;
            }
        }
        let (pp, _) = prepare_with_graph(&f, TARGET_NAME, &cfg).unwrap();
        let rep = walk_forward(&model, &pp, 80, 100, TailPolicy::Skip).unwrap();
        for (a, b) in base.rows.iter().zip(&rep.rows) {
            if a.origin_index <= t {
                assert_eq!(a.y_pred, b.y_pred, "origin {} leaked week {t}", a.origin_index);
            }
        }
    }
}

#[test]
fn walk_forward_is_repeatable_and_respects_tail_policy() {
    let cfg = small_cfg();
    let frame = synth_frame(110, 8);
    let (model, p) = untrained(&cfg, &frame);
    let a = walk_forward(&model, &p, 80, 100, TailPolicy::Skip).unwrap();
    assert_eq!(a, walk_forward(&model, &p, 80, 100, TailPolicy::Skip).unwrap());
    assert_eq!(a.origins(), (80..=99).collect::<Vec<_>>());
    assert_eq!(a.rows.len(), 20 * 2);
    let t = walk_forward(&model, &p, 80, 100, TailPolicy::Truncate).unwrap();
    assert_eq!(t.origins().len(), 21);
    assert_eq!(t.rows.len(), 41);
    for r in &a.rows {
        let row = p.row_of(r.origin_index + r.step - 1).unwrap();
        assert_eq!(r.y_true, Some(p.target[row]));
    }
    let s = summarize(&a).unwrap();
    assert_eq!(s.overall.n, 40);
    assert_eq!(s.per_step.len(), 2);
    assert!(s.overall.mae.powi(2) <= s.overall.mse);
    assert!(walk_forward(&model, &p, 5, 20, TailPolicy::Skip).is_err());
}

#[test]
fn report_files_have_expected_layout() {
    let cfg = small_cfg();
    let frame = synth_frame(110, 9);
    let (model, p) = untrained(&cfg, &frame);
    let rep = walk_forward(&model, &p, 80, 100, TailPolicy::Skip).unwrap();
    let mut buf = Vec::new();
    write_forecast_csv(&rep, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("origin_week,step,horizon,y_true,y_pred"));
    assert_eq!(text.lines().count(), 41);
    let mut buf = Vec::new();
    write_metrics_csv(&[summarize(&rep).unwrap()], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().nth(1).unwrap().starts_with("2,all,40,"));
}

#[test]
fn importance_is_thread_count_invariant() {
    let cfg = TrainConfig {
        max_epochs: 1,
        ..small_cfg()
    };
    let frame = synth_frame(110, 10);
    let (p, g) = prepare_with_graph(&frame, TARGET_NAME, &cfg).unwrap();
    let one = importance(&cfg, &p, &g, &[1, 2, 3], 1).unwrap();
    let two = importance(&cfg, &p, &g, &[1, 2, 3], 2).unwrap();
    assert_eq!(one, two);
    assert_eq!(one.k, 3);
    for run in &one.runs {
        assert_eq!(run.selected.len(), one.k);
    }
    let total: f64 = one.features.iter().map(|f| f.frequency).sum();
    assert!((total - one.k as f64).abs() < 1e-12);
    assert!(one.features.iter().all(|f| (0.0..=1.0).contains(&f.frequency)));
    let mut buf = Vec::new();
    write_importance_csv(&[one.clone()], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("feature,rank_h2,frequency_h2,mean_rank_h2,mean_gate_h2"));
    assert!(importance(&cfg, &p, &g, &[], 1).is_err());
}
