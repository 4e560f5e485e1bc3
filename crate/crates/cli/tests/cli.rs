use std::path::PathBuf;
use std::process::Command;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mmblow-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn mmblow(out: &PathBuf, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mmblow")).env("MMBLOW_OUT", out).args(args).output().unwrap()
}

#[test]
fn law_writes_constants_under_output_root() {
    let out = scratch("law");
    let o = mmblow(&out, &["law", "--dim", "1", "--p", "2", "--E0", "0", "--t1", "-1e-4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("law/law.json")).unwrap()).unwrap();
    for key in ["alpha", "beta", "C", "C_lambda", "C_b", "s1", "lambda1", "b1"] {
        assert!(v[key].is_number(), "missing {key}");
    }
    assert!((v["alpha"].as_f64().unwrap() - 1.5).abs() < 1e-14);
}

#[test]
fn groundstate_csv_and_grid() {
    let out = scratch("gs");
    // too coarse for the L₊ identity tolerance: outputs are written, exit code 1
    let o = mmblow(&out, &["groundstate", "--dim", "1", "--nodes", "640", "--rmax", "30"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = std::fs::read_to_string(out.join("groundstate/q.csv")).unwrap();
    assert!(csv.starts_with("r,re,im\n"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("groundstate/groundstate.json")).unwrap()).unwrap();
    assert_eq!(v["grid"]["dim"], 1);
    assert_eq!(v["grid"]["n"], 640);
    assert_eq!(v["grid"]["rmax"], 30.0);
}

#[test]
fn configuration_errors_exit_with_2() {
    let out = scratch("cfg");
    assert_eq!(mmblow(&out, &["law", "--dim", "4", "--p", "2"]).status.code(), Some(2));
    assert_eq!(mmblow(&out, &["law", "--t1", "0.5"]).status.code(), Some(2));
    let spec = out.join("bad.json");
    std::fs::write(&spec, r#"{"kind": "verify-everything"}"#).unwrap();
    assert_eq!(mmblow(&out, &["experiment", "--spec", spec.to_str().unwrap()]).status.code(), Some(2));
    let cfg = out.join("run.json");
    std::fs::write(&cfg, r#"{"dim": 1, "p": 2, "t1": 0.1}"#).unwrap();
    assert_eq!(mmblow(&out, &["evolve", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(mmblow(&out, &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn failing_assertions_exit_with_1() {
    // the closeness-exponent check of the law suite does not hold (see README)
    let out = scratch("law-suite");
    let spec = out.join("spec.json");
    std::fs::write(&spec, r#"{"kind": "verify-law", "dims": [1], "ps": [2]}"#).unwrap();
    let o = mmblow(&out, &["experiment", "--spec", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify-law/report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
    assert!(report["constants"][0]["C_lambda"].is_number());
    assert!(report["constants"][0]["mu"].is_number());
    assert!(out.join("verify-law/f_ratio_dim1_p2.dat").exists());
}

#[test]
fn statics_experiment_passes() {
    let out = scratch("statics");
    let spec = out.join("spec.json");
    std::fs::write(&spec, r#"{"kind": "verify-statics", "dims": [1, 2], "ps": [2]}"#).unwrap();
    let o = mmblow(&out, &["experiment", "--spec", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify-statics/report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["constants"].as_array().unwrap().len(), 2);
}
