use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sle_lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sle-lab"))
        .args(args)
        .env("SLE_LAB_OUTPUT_DIR", dir)
        .output()
        .expect("spawn sle-lab")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map(|rd| rd.map(|e| e.unwrap().file_name().into_string().unwrap()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

#[test]
fn exponents_at_kappa_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = sle_lab(dir.path(), &["exponents", "--kappa", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let e = &read_json(&dir.path().join("exponents.json"))["exponents"];
    assert!((e["r_c"].as_f64().unwrap() - 2.5).abs() < 1e-12);
    assert!((e["p_var_exponent"].as_f64().unwrap() - 1.25).abs() < 1e-12);
    // λ(r_c) = r_c (1 + κ/4) - κ r_c² / 8
    assert!((e["lambda_at_r_c"].as_f64().unwrap() - (2.5 * 1.5 - 2.0 * 6.25 / 8.0)).abs() < 1e-12);
}

#[test]
fn zero_driver_trace_is_vertical_slit() {
    let dir = tempfile::tempdir().unwrap();
    let out = sle_lab(dir.path(), &["trace", "--kappa", "0", "--steps", "1024", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let j = read_json(&dir.path().join("trace.json"));
    let y0 = j["y0"].as_f64().unwrap();
    let end = j["gamma_end"].as_array().unwrap();
    assert_eq!(end[0].as_f64().unwrap(), 0.0);
    assert!((end[1].as_f64().unwrap() - (y0 * y0 + 4.0).sqrt()).abs() < 1e-9);
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,re_gamma,im_gamma"));
    assert_eq!(csv.lines().count(), 1 + 1025);
}

#[test]
fn identical_runs_are_byte_identical() {
    let args = ["--threads", "2", "field", "--kappa-min", "1.5", "--kappa-max", "2.5", "--n-kappa", "4", "--steps", "64", "--seed", "11"];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(sle_lab(a.path(), &args).status.code(), Some(0));
    assert_eq!(sle_lab(b.path(), &args).status.code(), Some(0));
    for f in ["field.json", "field.csv"] {
        let (x, y) = (std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn usage_errors_exit_two_without_files() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["no-such-command"],
        vec!["trace", "--seed", "1"],
        vec!["trace", "--kappa", "-1", "--seed", "1"],
        vec!["--threads", "0", "exponents", "--kappa", "2"],
        vec!["verify-fprime", "--kappa", "2", "--r", "1", "--ys", "0.4,0.2", "--n", "50", "--seed", "1"],
    ] {
        let out = sle_lab(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(files(dir.path()).is_empty(), "{:?}", files(dir.path()));
}

#[test]
fn config_file_supplies_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# trace settings\nkappa = 0\nsteps = 16\nseed = 3\n").unwrap();
    let out = sle_lab(dir.path(), &["trace", "--config", conf.to_str().unwrap(), "--steps", "32"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let j = read_json(&dir.path().join("trace.json"));
    assert_eq!(j["steps"].as_u64(), Some(32));
    assert_eq!(j["seed"].as_u64(), Some(3));
    assert_eq!(j["kappa"].as_f64(), Some(0.0));

    std::fs::write(&conf, "kappa = 0\nbogus_key = 1\n").unwrap();
    let out = sle_lab(dir.path(), &["trace", "--config", conf.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_criterion_writes_replayable_case() {
    let first = tempfile::tempdir().unwrap();
    let args = ["verify-fprime", "--kappa", "2", "--r", "1", "--ys", "0.4,0.3,0.2", "--n", "200", "--seed", "1", "--tolerance", "0"];
    let out = sle_lab(first.path(), &args);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let conf = first.path().join("verify-fprime.failure.conf");
    assert!(conf.exists(), "{:?}", files(first.path()));
    let meta = read_json(&first.path().join("verify-fprime.meta.json"));
    assert_eq!(meta["argv"].as_array().unwrap().len(), args.len() + 1);

    let second = tempfile::tempdir().unwrap();
    let replay = sle_lab(second.path(), &["verify-fprime", "--config", conf.to_str().unwrap()]);
    assert_eq!(replay.status.code(), Some(1));
    for f in ["verify-fprime.json", "verify-fprime.csv", "verify-fprime.failure.conf"] {
        let a = std::fs::read(first.path().join(f)).unwrap();
        let b = std::fs::read(second.path().join(f)).unwrap();
        assert_eq!(a, b, "{f} differs on replay");
    }
}

#[test]
fn out_dir_flag_overrides_environment() {
    let (env_dir, flag_dir) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out = sle_lab(env_dir.path(), &["--out-dir", flag_dir.path().to_str().unwrap(), "exponents", "--kappa", "4"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(files(env_dir.path()).is_empty());
    assert_eq!(files(flag_dir.path()), ["exponents.json", "exponents.meta.json"]);
}
