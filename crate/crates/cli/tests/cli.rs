use std::fs;
use std::path::Path;
use std::process::Command;

use aucrac_cli::experiment::RESULTS_COLUMNS;
use aucrac_cli::{emit_plot_data, exit, load_config, run_experiment, CliError, ExperimentSpec, Figure};
use aucrac_core::{ConfigError, SimConfig, StrategyKind};

fn aucrac(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_aucrac"))
        .args(args)
        .env("AUCRAC_LOG", "off")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn small_base() -> SimConfig {
    SimConfig {
        horizon: 30.0,
        drain: 30.0,
        ..SimConfig::default()
    }
}

#[test]
fn config_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimConfig::default();
    let path = write(dir.path(), "c.json", &cfg.to_json_string());
    let back = load_config(Path::new(&path)).unwrap();
    assert_eq!(back.to_json_string(), cfg.to_json_string());
}

#[test]
fn config_errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (None, exit::CONFIG_MISSING, "not found"),
        (Some(r#"{"num_workers": "ten"}"#), exit::CONFIG_SCHEMA, "num_workers"),
        (Some(r#"{"strategy": "foo"}"#), exit::UNKNOWN_VARIANT, "strategy"),
        (Some(r#"{"workload": {"mix": {"lit": 0.5, "mit": 0.5, "hit": 0.5}}}"#), exit::MIX_SUM, "workload.mix"),
        (
            Some(r#"{"weights": {"lambda1": 0.5, "lambda2": 0.5, "lambda3": 0.5, "alpha1": 1, "alpha2": 1, "delta": 1}}"#),
            exit::CONFIG_INVALID,
            "lambda",
        ),
    ];
    let mut seen = Vec::new();
    for (i, (text, code, needle)) in cases.into_iter().enumerate() {
        let path = match text {
            Some(t) => write(dir.path(), &format!("c{i}.json"), t),
            None => dir.path().join("missing.json").to_string_lossy().into_owned(),
        };
        let out = aucrac(&["--config", &path, "--dump-config"]);
        assert_eq!(out.status.code(), Some(code), "case {i}: {}", String::from_utf8_lossy(&out.stderr));
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains(needle), "case {i}: {stderr}");
        seen.push(code);
    }
    seen.dedup();
    assert_eq!(seen.len(), 5);
}

#[test]
fn unwritable_output_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = write(dir.path(), "file", "x");
    let out_dir = format!("{blocker}/sub");
    let out = aucrac(&["--seeds", "0", "--strategy", "mct", "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(exit::OUTPUT_IO));
}

#[test]
fn bad_arguments_fail_before_running() {
    let out = aucrac(&["--strategy", "foo"]);
    assert_eq!(out.status.code(), Some(exit::UNKNOWN_VARIANT));
    let out = aucrac(&["--sweep", "speed=1,2"]);
    assert_eq!(out.status.code(), Some(exit::SPEC_INVALID));
    let out = aucrac(&["--mode", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn binary_writes_results_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &small_base().to_json_string());
    let out_dir = dir.path().join("out");
    let out = aucrac(&[
        "--config",
        &cfg,
        "--sweep",
        "devices=5,10",
        "--seeds",
        "0..1",
        "--out",
        out_dir.to_str().unwrap(),
        "--emit-plots",
        "completion_vs_devices,memory_vs_tasks",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let results = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(results.lines().next().unwrap(), RESULTS_COLUMNS.join(","));
    assert_eq!(results.lines().count(), 1 + 2 * 6 * 2);
    assert!(out_dir.join("plots/completion_vs_devices.csv").exists());
    assert!(out_dir.join("plots/memory_vs_tasks.csv").exists());
}

#[test]
fn single_run_aggregate_equals_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(small_base(), dir.path());
    spec.strategies = vec![StrategyKind::Greedy];
    spec.seeds = vec![4];
    let out = run_experiment(&spec).unwrap();
    assert_eq!(out.rows.len(), 1);
    let (row, agg) = (&out.rows[0], &out.aggregates[0]);
    assert_eq!(agg.mean_completion_s_mean, row.mean_completion_s);
    assert_eq!(agg.mn_profit_mean, row.mn_profit);
    assert_eq!(agg.mean_completion_s_std, 0.0);
    assert_eq!(agg.peak_mem_mb_std, 0.0);
}

#[test]
fn completion_plot_has_a_series_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(small_base(), dir.path());
    spec.sweep = "devices=10,20,30,40,50".parse().unwrap();
    spec.seeds = vec![0];
    let out = run_experiment(&spec).unwrap();
    let files = emit_plot_data(&out.results_path, &[Figure::CompletionVsDevices, Figure::MemoryVsTasks], &spec.base, &dir.path().join("p")).unwrap();
    let completion = fs::read_to_string(&files[0]).unwrap();
    let header: Vec<&str> = completion.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 6);
    let xs: Vec<&str> = completion.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(xs, vec!["10", "20", "30", "40", "50"]);

    let memory = fs::read_to_string(&files[1]).unwrap();
    assert_eq!(memory.lines().next().unwrap(), "tasks,container,vm");
    for line in memory.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[2] >= v[1]);
    }
}

#[test]
fn empty_results_error_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "r.csv", &format!("{}\n", RESULTS_COLUMNS.join(",")));
    let plots = dir.path().join("plots");
    let err = emit_plot_data(Path::new(&path), &Figure::ALL, &SimConfig::default(), &plots).unwrap_err();
    assert!(matches!(err, CliError::EmptyResults { .. }));
    assert_eq!(err.exit_code(), exit::RESULTS_INPUT);
    assert!(!plots.exists());
}

#[test]
fn missing_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cols: Vec<&str> = RESULTS_COLUMNS.iter().copied().filter(|c| *c != "fairness_jain").collect();
    let path = write(dir.path(), "r.csv", &format!("{}\n", cols.join(",")));
    let err = emit_plot_data(Path::new(&path), &[Figure::FairnessTable], &SimConfig::default(), dir.path()).unwrap_err();
    match err {
        CliError::MissingColumn { column, .. } => assert_eq!(column, "fairness_jain"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unknown_sweep_strategy_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(small_base(), dir.path());
    spec.sweep = "strategy=aucrac,nope".parse().unwrap();
    let err = run_experiment(&spec).unwrap_err();
    assert!(matches!(err, CliError::Config(ConfigError::UnknownVariant { .. })));
}
