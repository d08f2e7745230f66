//! End-to-end training behaviour on synthetic data.

use std::time::Instant;

use umod_core::data::{synth_generate, two_peak_profile, SyntheticSpec};
use umod_core::eval::{hp_rows, prepare, run_experiment, run_row, Protocol, RowOutcome};
use umod_core::model::{Forecaster, ModelConfig, Umod};
use umod_core::train::{evaluate_loss, train, StopReason, TrainConfig};

fn small_series(seed: u64) -> umod_core::data::ODSeries {
    let mut spec = SyntheticSpec::demo(seed);
    spec.stations = 4;
    spec.days = 4;
    spec.pair_amplitudes = umod_core::data::random_amplitudes(4, seed, 1.0, 6.0);
    spec.daily_profile = two_peak_profile(48, [16, 36], [1.0, 0.8], 2.0, 0.15);
    synth_generate(&spec).unwrap()
}

fn quick_protocol(series: &umod_core::data::ODSeries) -> Protocol {
    let mut p = Protocol::for_series(series);
    p.model.input_dim = 6;
    p.model.adaptive_dim = 6;
    p.train.max_epochs = 6;
    p
}

#[test]
fn overfits_eight_samples() {
    let series = small_series(2);
    let protocol = Protocol::for_series(&series);
    assert_eq!(
        (
            protocol.model.stations,
            protocol.model.history,
            protocol.model.horizon
        ),
        (4, 2, 2)
    );
    let prepared = prepare(&series, &protocol).unwrap();
    let samples = &prepared.splits.train[20..28];
    let cfg = TrainConfig {
        batch_size: 8,
        max_epochs: 500,
        patience: 500,
        ..Default::default()
    };
    let start = Instant::now();
    let model = Umod::new(protocol.model).unwrap();
    let before = evaluate_loss(&model, samples, 8, cfg.loss_kind).unwrap();
    let (model, report) = train(model, samples, samples, &cfg, &mut ()).unwrap();
    let after = evaluate_loss(&model, samples, 8, cfg.loss_kind).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(after <= 0.1 * before, "loss {before} -> {after}");
    assert!(report.epochs.len() <= 500);
    assert!(elapsed < 120.0, "took {elapsed:.1}s");
}

#[test]
fn training_is_deterministic() {
    let series = small_series(3);
    let protocol = quick_protocol(&series);
    let a = run_experiment(&series, &protocol, &mut ()).unwrap();
    let b = run_experiment(&series, &protocol, &mut ()).unwrap();
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.report, b.report);
    assert_eq!(a.test, b.test);
}

#[test]
fn shuffle_seed_changes_the_run() {
    let series = small_series(3);
    let protocol = quick_protocol(&series);
    let mut other = protocol;
    other.train.shuffle_seed = 99;
    let a = run_experiment(&series, &protocol, &mut ()).unwrap();
    let b = run_experiment(&series, &other, &mut ()).unwrap();
    assert_ne!(a.model.params(), b.model.params());
}

#[test]
fn best_epoch_snapshot_is_restored() {
    let series = small_series(5);
    let mut protocol = quick_protocol(&series);
    protocol.train.max_epochs = 12;
    protocol.train.patience = 3;
    protocol.train.lr = 0.05;
    let run = run_experiment(&series, &protocol, &mut ()).unwrap();
    let prepared = prepare(&series, &protocol).unwrap();
    let val = evaluate_loss(
        &run.model,
        &prepared.splits.val,
        protocol.train.batch_size,
        protocol.train.loss_kind,
    )
    .unwrap();
    assert_eq!(val, run.report.best_val_loss());
    let best = run.report.best_epoch;
    assert!(run
        .report
        .epochs
        .iter()
        .all(|e| e.val_loss >= run.report.epochs[best - 1].val_loss));
    if run.report.stop_reason == StopReason::EarlyStopped {
        assert_eq!(run.report.epochs.len(), best + protocol.train.patience);
    }
}

#[test]
fn sweep_row_matches_a_standalone_run() {
    let series = small_series(7);
    let base = quick_protocol(&series);
    let rows = hp_rows(&base, &[(2, 2), (3, 1)]);
    let (row, _) = run_row(&series, &rows[0]).unwrap();
    let mut standalone = base;
    standalone.model = ModelConfig {
        history: 2,
        horizon: 2,
        ..base.model
    };
    let run = run_experiment(&series, &standalone, &mut ()).unwrap();
    assert_eq!(row.outcome, RowOutcome::Metrics(run.test));
    assert_eq!(row.model, standalone.model);
}

#[test]
fn infeasible_sweep_row_is_skipped() {
    let series = small_series(8);
    let base = quick_protocol(&series);
    let rows = hp_rows(&base, &[(40, 40)]);
    let (row, model) = run_row(&series, &rows[0]).unwrap();
    assert!(matches!(row.outcome, RowOutcome::Skipped(_)));
    assert!(model.is_none());
}

/// Every history/horizon pair should forecast noise-free periodic data to
/// within 5% MAPE. Short histories miss the bound: without a time-of-day
/// input, flat off-peak stretches of the profile are indistinguishable.
#[test]
#[ignore = "slow (about 8 minutes) and fails for H = 2 and H = 4"]
fn noise_free_periodic_data_is_forecast_within_five_percent() {
    let spec = SyntheticSpec {
        noise_std: 0.0,
        ..SyntheticSpec::demo(0)
    };
    let series = synth_generate(&spec).unwrap();
    let base = Protocol::for_series(&series);
    let rows = hp_rows(&base, &umod_core::eval::DEFAULT_HP_GRID);
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = rows
            .iter()
            .map(|r| s.spawn(|| run_row(&series, r).unwrap().0))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let misses: Vec<String> = results
        .iter()
        .filter_map(|r| {
            let mape = r.metrics().and_then(|m| m.mape_percent);
            (!mape.is_some_and(|v| v < 5.0)).then(|| format!("{}: {mape:?}", r.label))
        })
        .collect();
    assert!(misses.is_empty(), "MAPE at or above 5%: {misses:?}");
}
