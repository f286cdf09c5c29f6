use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const FAST: &str = r#"{
  "discretization": {"h_fine": 0.1},
  "data": {"h_data": 0.05},
  "inversion": {"initial_vertices": [[-0.35, 0.1], [0.43, 0.12]]}
}"#;

fn faultscope(dir: &Path, command: &str, config: &str, sets: &[&str], out: &str) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{out}.json"));
    std::fs::write(&cfg, config).unwrap();
    let out_dir = dir.join(out);
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_faultscope"));
    cmd.arg(command).arg("--config").arg(&cfg).arg("--out").arg(&out_dir);
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    (cmd.output().unwrap(), out_dir)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_measurements_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = faultscope(dir.path(), "synth", "{}", &[], "synth");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(path.join("measurement_0.csv")).unwrap();
    assert!(csv.starts_with("node_id,x,y,ux,uy\n"));
    let side = json(&path.join("measurement_0.json"));
    let level = side["noise_level"].as_f64().unwrap();
    assert!((0.001..=0.015).contains(&level), "{level}");
    assert_eq!(side["acquisition"], "all_exposed");
    assert_eq!(json(&path.join("resolved_config.json"))["inversion"]["alpha"], 1e-6);
}

#[test]
fn synth_without_noise_and_reread() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = faultscope(dir.path(), "synth", FAST, &["data.a=0", "data.slips=[\"compact\",\"second\"]"], "clean");
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&path.join("measurement_0.json"))["noise_level"], 0.0);
    assert_eq!(json(&path.join("measurement_1.json"))["slip"]["kind"], "compact_bump2");
    let m0 = path.join("measurement_0.csv");
    let sets = [format!("data.measurements=[\"{}\"]", m0.display()), "inversion.max_iter=1".to_string()];
    let sets: Vec<&str> = sets.iter().map(|s| s.as_str()).collect();
    let (out, path) = faultscope(dir.path(), "reconstruct", FAST, &sets, "one");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&path.join("report.json"));
    assert_eq!(report["termination"], "MAX_ITER");
    assert_eq!(report["misfit_series"].as_array().unwrap().len(), 1);
    assert_eq!(report["vertices_true"][1][0], 0.4);
    assert!(path.join("overlay.svg").exists());
    assert!(json(&path.join("timing.json"))["seconds"].as_f64().unwrap() > 0.0);
}

#[test]
fn broken_geometry_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = faultscope(dir.path(), "synth", r#"{"geometry": {"fault": [[-0.95, 0], [0.4, 0]]}}"#, &[], "bad");
    assert_eq!(out.status.code(), Some(2));
    assert!(!path.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1, "no staging directory left behind");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = faultscope(dir.path(), "synth", r#"{"inversion": {"alpah": 1}}"#, &[], "typo");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("inversion.alpah"));
    let (out, _) = faultscope(dir.path(), "reconstruct", "{}", &["inversion.alpha=-1"], "alpha");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha must be > 0"));
    let (out, _) = faultscope(dir.path(), "reconstruct", "{}", &[], "initial");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("inversion.initial_vertices required"));
}

#[test]
fn missing_measurement_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = faultscope(dir.path(), "reconstruct", FAST, &["data.measurements=[\"/nonexistent/m.csv\"]"], "missing");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/m.json"));
    assert!(!path.exists());
}

#[test]
fn noiseless_self_start_stays_at_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"discretization": {"h_fine": 0.1}, "data": {"a": 0, "h_data": 0.1},
                  "inversion": {"initial_vertices": [[-0.4, 0.0], [0.4, 0.0]], "tol": 1e-2}}"#;
    let (out, path) = faultscope(dir.path(), "reconstruct", cfg, &[], "self");
    assert_eq!(out.status.code(), Some(0));
    let r = json(&path.join("report.json"));
    assert_eq!(r["termination"], "CONVERGED");
    assert_eq!(r["iterations"], 151);
    let v = &r["vertices_final"];
    for (l, x) in [(0, -0.4), (1, 0.4)] {
        assert!((v[l][0].as_f64().unwrap() - x).abs() < 1e-3);
        assert!(v[l][1].as_f64().unwrap().abs() < 1e-3);
    }
    let series: Vec<f64> = r["misfit_series"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(series.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn reconstruct_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, pa) = faultscope(dir.path(), "reconstruct", FAST, &["inversion.max_iter=30"], "a");
    let (b, pb) = faultscope(dir.path(), "reconstruct", FAST, &["inversion.max_iter=30"], "b");
    assert_eq!((a.status.code(), b.status.code()), (Some(0), Some(0)));
    for f in ["report.json", "resolved_config.json", "overlay.svg"] {
        assert_eq!(std::fs::read(pa.join(f)).unwrap(), std::fs::read(pb.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn gradcheck_gate() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = faultscope(dir.path(), "gradcheck", FAST, &[], "gc");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(path.join("gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let (out, _) = faultscope(dir.path(), "gradcheck", FAST, &["gradcheck.negate=true"], "gc_neg");
    assert_eq!(out.status.code(), Some(4));
    let sets = ["physics.lambda_gradient=[0.1, 0]", "gradcheck.formulas=[\"boundary\"]", "data.slips=[\"compact\"]"];
    let (out, path) = faultscope(dir.path(), "gradcheck", FAST, &sets, "gc_var");
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(path.join("gradcheck.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with("SKIPPED(VariableCoefficients)")));
}

#[test]
fn forward_writes_trace_and_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = faultscope(dir.path(), "forward", FAST, &[], "fwd");
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&path.join("forward.json"))["triangles"].as_u64().unwrap() > 100);
    assert!(std::fs::read_to_string(path.join("mesh.txt")).unwrap().starts_with("VERTICES"));
    assert!(path.join("trace.csv").exists());
}
