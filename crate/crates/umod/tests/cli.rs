//! End-to-end runs of the `umod` binary and the command layer.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use umod::commands::{
    cmd_sweep, cmd_train, SweepCommand, CHECKPOINT_FILE, CONFIG_FILE, EPOCH_LOG, METRICS_FILE,
};
use umod::container::read_embedding;
use umod::umod_core::eval::{DimAxis, RowOutcome};
use umod::RunConfig;

const SMALL: &str = r#"
[synthetic]
stations = 4
days = 4
seed = 3

[model]
input_dim = 6
adaptive_dim = 6

[train]
max_epochs = 3
patience = 3
"#;

fn umod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_umod"))
        .args(args)
        .output()
        .expect("spawn umod")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, format!("{SMALL}{extra}")).unwrap();
    p
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn synth_is_reproducible_and_reports_the_demo_length() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    let out = umod(&["synth", "--out", s(&a)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("N=8 T_total=476"));
    assert!(umod(&["synth", "--out", s(&b)]).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn missing_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    let out = umod(&[
        "synth",
        "--spec",
        s(&missing),
        "--out",
        s(&dir.path().join("x.bin")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));

    assert_eq!(
        umod(&["train", "--config", s(&missing)]).status.code(),
        Some(2)
    );

    let cfg = small_config(dir.path(), "");
    let out = umod(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&dir.path().join("none.ckpt")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let stations = dir.path().join("s.txt");
    fs::write(&stations, "A\nB\n").unwrap();
    let out = umod(&[
        "ingest",
        "--trips",
        s(&dir.path().join("trips.csv")),
        "--stations",
        s(&stations),
        "--out",
        s(&dir.path().join("o.bin")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ingest_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let stations = dir.path().join("s.txt");
    let trips = dir.path().join("t.csv");
    let series = dir.path().join("o.bin");
    fs::write(&stations, "A\nB\n").unwrap();
    fs::write(&trips, "A,B,30000\nB,A,84600\n").unwrap();
    let out = umod(&[
        "ingest",
        "--trips",
        s(&trips),
        "--stations",
        s(&stations),
        "--out",
        s(&series),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("total_flow=1"), "{text}");
    assert!(text.contains("off hours 1"), "{text}");

    fs::write(&trips, "A,B,30000\nZ,A,84600\n").unwrap();
    let out = umod(&[
        "ingest",
        "--trips",
        s(&trips),
        "--stations",
        s(&stations),
        "--out",
        s(&series),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t.csv:2:"));
}

#[test]
fn train_is_deterministic_and_eval_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let run_a = dir.path().join("a");
    let run_b = dir.path().join("b");
    for run in [&run_a, &run_b] {
        let out = umod(&["train", "--config", s(&cfg), "--out", s(run)]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in [CONFIG_FILE, EPOCH_LOG, CHECKPOINT_FILE, METRICS_FILE] {
        let a = fs::read(run_a.join(f)).unwrap();
        let b = fs::read(run_b.join(f)).unwrap();
        if f == CONFIG_FILE {
            // Only the output directory differs.
            let a = String::from_utf8(a).unwrap().replace(s(&run_a), "");
            let b = String::from_utf8(b).unwrap().replace(s(&run_b), "");
            assert_eq!(a, b);
        } else {
            assert_eq!(a, b, "{f} differs between identical runs");
        }
    }
    let log = fs::read_to_string(run_a.join(EPOCH_LOG)).unwrap();
    assert_eq!(
        log.lines().next(),
        Some("epoch,train_loss,val_loss,seconds")
    );
    assert_eq!(log.lines().count(), 4);

    // Retraining from the resolved config writes the same checkpoint.
    let run_c = dir.path().join("c");
    let out = umod(&[
        "train",
        "--config",
        s(&run_a.join(CONFIG_FILE)),
        "--out",
        s(&run_c),
    ]);
    assert!(out.status.success());
    assert_eq!(
        fs::read(run_a.join(CHECKPOINT_FILE)).unwrap(),
        fs::read(run_c.join(CHECKPOINT_FILE)).unwrap()
    );

    let eval_out = dir.path().join("eval.csv");
    let out = umod(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&run_a.join(CHECKPOINT_FILE)),
        "--baseline",
        "last_value",
        "--metrics-out",
        s(&eval_out),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let trained = csv_rows(&run_a.join(METRICS_FILE));
    let evaluated = csv_rows(&eval_out);
    assert_eq!(evaluated.len(), 2);
    assert_eq!(evaluated[0], trained[0]);
    assert_eq!(evaluated[1][0], "last_value");
}

#[test]
fn eval_rejects_a_checkpoint_of_another_width() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let run = dir.path().join("r");
    assert!(umod(&["train", "--config", s(&cfg), "--out", s(&run)])
        .status
        .success());
    let wide = dir.path().join("wide.toml");
    fs::write(&wide, SMALL.replace("input_dim = 6", "input_dim = 8")).unwrap();
    let out = umod(&[
        "eval",
        "--config",
        s(&wide),
        "--checkpoint",
        s(&run.join(CHECKPOINT_FILE)),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("input"));
}

#[test]
fn infeasible_history_names_the_minimum_length() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("[model]", "[model]\nhistory = 50");
    fs::write(&cfg, text).unwrap();
    let out = umod(&[
        "train",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("r")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("52"), "{err}");
}

fn small_run(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::from_toml(SMALL).unwrap();
    cfg.train.max_epochs = 1;
    cfg.output.dir = dir.to_path_buf();
    cfg
}

#[test]
fn hp_sweep_has_seven_rows_and_parallel_matches_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let seq = cmd_sweep(
        &small_run(&dir.path().join("seq")),
        SweepCommand::HistoryHorizon,
        false,
    )
    .unwrap();
    let par = cmd_sweep(
        &small_run(&dir.path().join("par")),
        SweepCommand::HistoryHorizon,
        true,
    )
    .unwrap();
    assert_eq!(seq.result.rows.len(), 7);
    assert_eq!(csv_rows(&seq.table).len(), 7);
    assert_eq!(fs::read(&seq.table).unwrap(), fs::read(&par.table).unwrap());
    let hp: Vec<(usize, usize)> = seq
        .result
        .rows
        .iter()
        .map(|r| (r.model.history, r.model.horizon))
        .collect();
    assert_eq!(hp, [(6, 2), (6, 4), (2, 2), (4, 4), (6, 6), (2, 4), (2, 6)]);
    assert!(seq.summary.exists());
}

#[test]
fn ablation_sweep_has_three_rows_and_exports_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let a = cmd_sweep(&small_run(dir.path()), SweepCommand::Ablation, false).unwrap();
    let flags: Vec<(bool, bool)> = a
        .result
        .rows
        .iter()
        .map(|r| (r.model.use_input_embedding, r.model.use_adaptive_embedding))
        .collect();
    assert_eq!(flags, [(true, true), (false, true), (true, false)]);
    assert!(a
        .result
        .rows
        .iter()
        .all(|r| matches!(r.outcome, RowOutcome::Metrics(_))));
    assert_eq!(a.embeddings.len(), 2);
    let (labels, adaptive) = read_embedding(&a.embeddings[0]).unwrap();
    assert_eq!(labels.len(), 4);
    assert_eq!(adaptive.shape(), &[2, 4, 6]);
    let (_, input) = read_embedding(&a.embeddings[1]).unwrap();
    assert_eq!(input.shape(), &[4, 6]);
}

#[test]
fn dimension_sweeps_hold_the_other_width_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_run(dir.path());
    cfg.model.input_dim = 24;
    cfg.model.adaptive_dim = 80;
    cfg.synthetic.days = 3;
    for axis in [DimAxis::Input, DimAxis::Adaptive] {
        let a = cmd_sweep(&cfg, SweepCommand::Dimension(axis), true).unwrap();
        let dims: Vec<(usize, usize)> = a
            .result
            .rows
            .iter()
            .map(|r| (r.model.input_dim, r.model.adaptive_dim))
            .collect();
        let expected: Vec<(usize, usize)> = [4, 8, 16, 32, 64]
            .iter()
            .map(|&d| match axis {
                DimAxis::Input => (d, 80),
                DimAxis::Adaptive => (24, d),
            })
            .collect();
        assert_eq!(dims, expected);
        assert_eq!(csv_rows(&a.table).len(), 5);
    }
}

#[test]
fn train_writes_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let a = cmd_train(&small_run(&dir.path().join("run"))).unwrap();
    for f in [CONFIG_FILE, EPOCH_LOG, CHECKPOINT_FILE, METRICS_FILE] {
        assert!(a.dir.join(f).exists(), "{f} missing");
    }
    let resolved = RunConfig::load(&a.dir.join(CONFIG_FILE)).unwrap();
    assert_eq!(resolved.model.output_dim, Some(4));
    assert_eq!(resolved.model.spatial_hidden, Some(4));
    assert_eq!(csv_rows(&a.dir.join(METRICS_FILE))[0][0], "umod");
}
