use std::path::Path;
use std::process::Command;

fn cffl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cffl")).args(args).env("RUST_LOG", "warn").output().expect("spawn cffl")
}

/// CSV body with the wall-time column dropped.
fn stable_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().clone();
    let wall = header.iter().position(|h| h == "wall_time_s");
    rdr.records()
        .map(|r| r.unwrap().iter().enumerate().filter(|(i, _)| Some(*i) != wall).map(|(_, s)| s.to_string()).collect())
        .collect()
}

fn small_run(out: &Path, realizations: &str, extra: &[&str]) -> std::process::Output {
    let out = out.to_str().unwrap();
    let mut args =
        vec!["--preset", "fig5", "--M", "6", "--K", "2", "--realizations", realizations, "--scheme", "BL1,BL2", "--out", out];
    args.extend_from_slice(extra);
    cffl(&args)
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert!(small_run(&a, "3", &[]).status.success());
    assert!(small_run(&b, "3", &["--threads", "1"]).status.success());
    let rows = stable_rows(&a);
    assert_eq!(rows.len(), 6);
    assert_eq!(rows, stable_rows(&b));
    assert!(dir.path().join("a_summary.csv").exists());
    assert!(!dir.path().join("a.partial.csv").exists());
}

#[test]
fn header_and_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    assert!(small_run(&out, "1", &[]).status.success());
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "scheme", "sweep_var", "sweep_value", "realization", "seed", "t_e_s", "theta", "iterations", "resamples",
            "status", "detail", "wall_time_s"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(&r[1], "M");
        assert_eq!(&r[2], "6");
        assert_eq!(&r[3], "0");
        assert_eq!(&r[9], "ok");
        assert!(r[5].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert!(small_run(&a, "3", &["--seed", "1"]).status.success());
    assert!(small_run(&b, "3", &["--seed", "2"]).status.success());
    assert_ne!(stable_rows(&a), stable_rows(&b));
}

#[test]
fn trace_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"trace": true, "long_term": {"n_outer": 5, "early_stop_window": 0}}"#).unwrap();
    let out = dir.path().join("t.csv");
    let o = cffl(&[
        "--preset", "fig5", "--config", cfg.to_str().unwrap(), "--M", "6", "--K", "2", "--realizations", "1",
        "--scheme", "JOINT", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = stable_rows(&dir.path().join("t_trace.csv"));
    assert_eq!(trace.len(), 5);
    assert!(!stable_rows(&dir.path().join("t_sca_trace.csv")).is_empty());
}

#[test]
fn config_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"fl": {"e_max": 1}}"#).unwrap();
    let o = cffl(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("e_max"));
    assert_eq!(cffl(&["--preset", "nope"]).status.code(), Some(2));
    assert_eq!(cffl(&["--K", "0", "--print-config"]).status.code(), Some(2));
}

#[test]
fn print_config_round_trips() {
    let o = cffl(&["--preset", "fig8", "--print-config"]);
    assert!(o.status.success());
    let cfg: cffl_cli::ExperimentConfig = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cfg, cffl_cli::presets::preset("fig8").unwrap());
}
