use std::path::Path;
use std::process::{Command, Output};

use platoon_core::gp::io::{load_sparse, save_sparse};
use platoon_core::gp::{Dataset, KernelHyper, SparseGpModel};
use platoon_core::kv::KvFile;

fn platoon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_platoon")).args(args).env_remove("PLATOON_HOME").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn zero_model(path: &Path) {
    let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![5.0 * i as f64, 5.0 * i as f64]).collect();
    let data = Dataset::from_rows(&rows, &[0.0; 8]).unwrap();
    let h = KernelHyper::new(1e-24, vec![100.0, 100.0], 1e-6).unwrap();
    save_sparse(&SparseGpModel::from_inducing(&data, data.inputs.clone(), h).unwrap(), path).unwrap();
}

#[test]
fn unknown_flag_prints_usage_and_fails() {
    let o = platoon(&["simulate", "--scenario", "rest", "--out", "x", "--frobnicate"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert!(!platoon(&["no-such-command"]).status.success());
}

#[test]
fn rest_scenario_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rest");
    let o = platoon(&["simulate", "--scenario", "rest", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["results.csv", "metrics.txt", "diagnostics.csv", "events.csv", "manifest.txt", "velocity.svg", "position.svg", "gaps.svg"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,p_av1,v_av1,acc_av1,p_av2,v_av2,acc_av2,p_hv,v_hv,gap_av,gap_hv,solve_time");
    assert_eq!(lines.count(), 100);
    let m = KvFile::load(&out.join("metrics.txt")).unwrap();
    assert_eq!(m.get("min_gap_hv"), Some("12"));
    assert_eq!(m.get("solve_time_mean"), None);
    let gaps = std::fs::read_to_string(out.join("gaps.svg")).unwrap();
    assert!(gaps.contains("min gap 12.000 m"));
}

#[test]
fn emergency_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("em");
    let o = platoon(&["simulate", "--scenario", "emergency", "--controller", "nominal", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1301);
}

#[test]
fn gp_controller_requires_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = platoon(&["simulate", "--scenario", "rest", "--controller", "gp", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--model"), "{}", stderr(&o));
}

#[test]
fn model_found_through_home_directory() {
    let dir = tempfile::tempdir().unwrap();
    zero_model(&dir.path().join("gp_model.txt"));
    std::fs::write(dir.path().join("short.cfg"), "scenario = rest\nduration = 1\n").unwrap();
    let out = dir.path().join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_platoon"))
        .args(["simulate", "--scenario", "short", "--controller", "gp", "--out", p(&out)])
        .env("PLATOON_HOME", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let m = KvFile::load(&out.join("manifest.txt")).unwrap();
    assert!(m.get("model").unwrap().ends_with("gp_model.txt"));
    assert_eq!(m.get("scenario.duration"), Some("1"));
}

#[test]
fn timing_flag_adds_timing_stats() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("zero.txt");
    zero_model(&model);
    let out = dir.path().join("rt");
    let o = platoon(&["simulate", "--scenario", "realtime", "--controller", "gp", "--model", p(&model), "--timing", "--set", "duration=5", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = KvFile::load(&out.join("metrics.txt")).unwrap();
    for k in ["solve_time_mean", "solve_time_max", "solve_time_std"] {
        assert!(m.get(k).is_some(), "missing {k}");
    }
    assert_eq!(m.get("gp_batches"), m.get("steps"));
}

#[test]
fn replay_rejects_changed_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("zero.txt");
    zero_model(&model);
    let out = dir.path().join("a");
    let o = platoon(&["simulate", "--scenario", "rest", "--controller", "gp", "--model", p(&model), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let again = platoon(&["simulate", "--manifest", p(&out.join("manifest.txt")), "--out", p(&dir.path().join("b"))]);
    assert!(again.status.success(), "{}", stderr(&again));
    std::fs::write(&model, "model = sparse\n").unwrap();
    let o = platoon(&["simulate", "--manifest", p(&out.join("manifest.txt")), "--out", p(&dir.path().join("c"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("changed"), "{}", stderr(&o));
}

#[test]
fn arx_only_training_is_flat_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let train = |name: &str| {
        let out = dir.path().join(name);
        let o = platoon(&[
            "train-gp", "--synthetic", "1", "--duration", "60", "--g-gain", "0", "--g-drift", "0", "--noise-std", "0", "--out", p(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        (std::fs::read(&out).unwrap(), String::from_utf8(o.stdout).unwrap(), out)
    };
    let (a, report, path) = train("a.txt");
    let (b, _, _) = train("b.txt");
    assert_eq!(a, b);
    assert!(report.contains("data,arx_rmse,arx_gp_rmse,improvement_pct"));
    assert!(report.contains("speedup"));
    let gp = load_sparse(&path).unwrap();
    for x in [0.0, 10.0, 20.0, 30.0] {
        for v in [0.0, 10.0, 20.0, 30.0] {
            assert!(gp.predict(&[x, v]).unwrap().0.abs() <= 1e-3);
        }
    }
    assert!(dir.path().join("a.report.txt").is_file());
    assert!(dir.path().join("a.manifest.txt").is_file());
}

#[test]
fn unreadable_trace_is_a_file_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = platoon(&["train-gp", "--trace", p(&dir.path().join("missing.csv")), "--out", p(&dir.path().join("m.txt"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.csv"), "{}", stderr(&o));
}

#[test]
fn trace_files_train_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    let model = dir.path().join("m.txt");
    let o = platoon(&["train-gp", "--synthetic", "1", "--duration", "40", "--save-traces", p(&traces), "--out", p(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t1 = traces.join("train1.csv");
    let o = platoon(&["train-gp", "--trace", p(&t1), "--held-out", p(&traces.join("held_out1.csv")), "--out", p(&dir.path().join("m2.txt"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = platoon(&["evaluate-model", "--model", p(&model), "--trace", p(&t1)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.lines().nth(1).unwrap().contains("train1.csv"));
}

#[test]
fn compare_with_zero_uncertainty_model_has_zero_delta() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("zero.txt");
    zero_model(&model);
    let out = dir.path().join("cmp");
    let o = platoon(&["compare", "--scenario", "emergency", "--set", "duration=20", "--model", p(&model), "--seeds", "2", "--jobs", "2", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(out.join("compare.txt")).unwrap();
    let kv = KvFile::parse(report.split("\n\n").nth(1).unwrap(), "compare").unwrap();
    let delta: f64 = kv.parse_value("median_min_gap_delta").unwrap();
    assert!(delta.abs() < 1e-6, "{delta}");
    assert!(kv.get("timing_overhead_pct").is_some());
    assert!(out.join("manifest.txt").is_file());
}
