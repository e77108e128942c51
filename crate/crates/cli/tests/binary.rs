use std::path::Path;
use std::process::{Command, Output};

use camdp_core::CmdpInstance;

fn camdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camdp")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_tight_instance(dir: &Path) -> String {
    let inst = CmdpInstance::new(2, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0], vec![1.0; 4], vec![0.3; 4], 0.5, vec![
        1.0, 0.0,
    ])
    .unwrap();
    let path = dir.join("tight.json");
    inst.save(&path).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn solve_exit_codes() {
    let met = camdp(&["solve", "--instance", "fixture:binding4", "--epsilon", "0.2", "--samples", "200", "--t-cap", "1000000"]);
    assert_eq!(code(&met), 0, "{}", String::from_utf8_lossy(&met.stderr));
    let report: serde_json::Value = serde_json::from_slice(&met.stdout).unwrap();
    assert_eq!(report["objective_met"], true);
    assert_eq!(report["N"], 200);

    let unmet = camdp(&["solve", "--instance", "fixture:binding4", "--epsilon", "0.3", "--samples", "3", "--t-cap", "2000"]);
    assert_eq!(code(&unmet), 3);

    let dir = tempfile::tempdir().unwrap();
    let tight = write_tight_instance(dir.path());
    let strict = camdp(&["solve", "--instance", &tight, "--mode", "strict", "--epsilon", "0.1", "--samples", "5"]);
    assert_eq!(code(&strict), 2, "{}", String::from_utf8_lossy(&strict.stderr));

    for bad in [
        vec!["solve", "--instance", "fixture:nothing", "--epsilon", "0.1", "--samples", "5"],
        vec!["solve", "--instance", "fixture:binding4", "--epsilon", "-1", "--samples", "5"],
        vec!["solve", "--instance", "fixture:binding4", "--epsilon=-1", "--samples", "5"],
        vec!["solve", "--instance", "fixture:binding4", "--epsilon", "0.1", "--samples", "0"],
        vec!["solve", "--instance", "fixture:binding4", "--epsilon", "0.1"],
        vec!["solve", "--instance", "fixture:binding4", "--epsilon", "0.1", "--samples", "5", "--planner", "magic"],
        vec!["solve", "--instance", "/does/not/exist.json", "--epsilon", "0.1", "--samples", "5"],
        vec!["verify", "--suite", "no-such-suite"],
        vec!["hard-gen", "--params", "kind=general,S=12", "--out", "x.json"],
    ] {
        assert_eq!(code(&camdp(&bad)), 1, "{bad:?}");
    }
}

#[test]
fn malformed_instance_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\"n_states\": 2").unwrap();
    let out = camdp(&["oracle", "--instance", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn solve_writes_report_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (report, trace) = (dir.path().join("r.json"), dir.path().join("t.csv"));
    let out = camdp(&[
        "solve", "--instance", "fixture:binding4", "--epsilon", "0.2", "--samples", "20", "--seed", "4", "--t-cap", "500",
        "--out", report.to_str().unwrap(), "--trace", trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(saved["T"], 500);
    assert_eq!(saved["status"], serde_json::Value::Null);
    let mut rows = csv::Reader::from_path(&trace).unwrap();
    assert_eq!(rows.headers().unwrap().get(0), Some("iter"));
    assert_eq!(rows.records().count(), 500);
}

#[test]
fn hard_gen_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("hard.json");
    let out = camdp(&["hard-gen", "--params", "kind=general,S=13,A=3,B=4,epsilon=0.01,zeta=0.25,s_star=1", "--out", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let inst = CmdpInstance::load(&out_path).unwrap();
    assert_eq!(inst.n_states(), 13);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("hard.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["kind"], "general");
    assert_eq!(meta["s_star"], 1);

    let lp = camdp(&["oracle", "--instance", out_path.to_str().unwrap()]);
    assert_eq!(code(&lp), 0);
    let lp: serde_json::Value = serde_json::from_slice(&lp.stdout).unwrap();
    let expected = meta["expected_optimum"].as_f64().unwrap();
    assert!((lp["objective"].as_f64().unwrap() - expected).abs() < 1e-10);
}

#[test]
fn oracle_reports_structure() {
    let out = camdp(&["oracle", "--instance", "fixture:binding4", "--structure"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["lp"]["status"], "optimal");
    assert!(v["structure"]["zeta"].as_f64().unwrap() > 0.3);

    let dir = tempfile::tempdir().unwrap();
    let tight = write_tight_instance(dir.path());
    assert_eq!(code(&camdp(&["oracle", "--instance", &tight])), 2);
}

#[test]
fn sweep_cli_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("grid.csv");
    let spec = dir.path().join("grid.cfg");
    std::fs::write(&spec, format!("instance = fixture:binding4\nepsilon = 0.2\nN = 10,20\nseeds = 0..2\nt_cap = 1000\nout = {}\n", csv_path.display()))
        .unwrap();
    let out = camdp(&["sweep", "--config", spec.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let from_file = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(from_file.lines().count(), 5);

    let flags = camdp(&[
        "sweep", "--instance", "fixture:binding4", "--epsilon", "0.2", "--samples", "10,20", "--seeds", "0..2", "--t-cap", "1000",
    ]);
    assert_eq!(code(&flags), 0);
    assert_eq!(String::from_utf8(flags.stdout).unwrap(), from_file);

    let missing = camdp(&["sweep", "--instance", "fixture:binding4", "--epsilon", "0.2"]);
    assert_eq!(code(&missing), 1);
}

#[test]
fn verify_lists_suites() {
    let out = camdp(&["verify", "--suite", "list"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "determinism"));
    assert!(text.lines().any(|l| l == "acceptance"));
}
