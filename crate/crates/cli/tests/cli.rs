use std::path::Path;
use std::process::{Command, Output};

fn qnls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnls"))
        .args(args)
        .env_remove("QNLS_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn scaling_prints_one_for_abs2_in_2d() {
    let o = qnls(&["scaling", "--nonlinearity", "abs2", "--dim", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(data_lines(&stdout(&o)), ["1"]);
}

#[test]
fn variance_scan_rows_increase() {
    let o = qnls(&["variance-scan", "--alpha", "0.75", "--n", "1,0", "--t", "1", "--N", "64,128,256,512"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows = data_lines(&text);
    assert_eq!(rows[0], qnls_header());
    let values: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(6).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 4);
    assert!(values.windows(2).all(|w| w[1] > w[0]), "{values:?}");
}

fn qnls_header() -> &'static str {
    "alpha,N,t,n1,n2,statistic,value,samples,seed"
}

#[test]
fn solve_outside_regime_exits_two() {
    let o = qnls(&["solve", "--alpha", "0.9", "--N", "16", "--T", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no contraction"));
}

#[test]
fn validation_errors_exit_one() {
    for args in [
        &["sample", "--alpha", "0.5"][..],
        &["sample", "--alpha", "0.5", "--N", "0"],
        &["second-iterate", "--alpha", "0.5", "--N", "4", "--n", "0,0"],
        &["scaling", "--dim", "4"],
        &["solve", "--alpha", "0.25", "--N", "4"],
        &["no-such-command"],
        &["variance-scan", "--alpha", "x"],
    ] {
        let o = qnls(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn every_output_echoes_config_and_constant() {
    for args in [
        &["sample", "--alpha", "0.5", "--N", "3"][..],
        &["second-iterate", "--alpha", "0.5", "--N", "4", "--samples", "3"],
        &["resonant-sum", "--alpha", "0.75", "--N", "8,16"],
        &["tightness", "--alpha", "0.75", "--N", "4", "--samples", "200"],
        &["counting-check", "--N", "2,4", "--case", "III"],
        &["tensor-check", "--N", "2,4"],
        &["solve", "--alpha", "0.25", "--N", "4", "--T", "0.01", "--steps", "8"],
        &["solve", "--alpha", "0.25", "--N", "4", "--T", "0.01", "--method", "rk4"],
        &["converge", "--alpha", "0.25", "--N", "2,4", "--T", "0.01", "--steps", "8"],
    ] {
        let o = qnls(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let text = stdout(&o);
        assert!(text.lines().any(|l| l.starts_with("# config {")), "{args:?}");
        assert!(text.lines().any(|l| l == "# kernel_constant 1"), "{args:?}");
        assert!(data_lines(&text).len() >= 2, "{args:?}");
    }
}

#[test]
fn json_format_is_valid() {
    let o = qnls(&["resonant-sum", "--alpha", "0.75", "--N", "8", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["command"], "resonant-sum");
    assert_eq!(v["kernel_constant"], 1.0);
    assert_eq!(v["data"][0]["statistic"], "RESONANT_SUM");
}

#[test]
fn config_file_overrides_flags_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"alpha": [0.5], "N": [8, 16]}"#).unwrap();
    let o = qnls(&["variance-scan", "--alpha", "0.75", "--N", "4", "--config", good.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows = data_lines(&text);
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("5.0000000000000000e-1,8,"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"alpha": [0.5], "colour": "red"}"#).unwrap();
    let o = qnls(&["variance-scan", "--N", "4", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

fn run_into(dir: &Path, jobs: &str) -> Vec<u8> {
    let o = Command::new(env!("CARGO_BIN_EXE_qnls"))
        .args(["variance-scan", "--alpha", "1,0.5,0.75", "--N", "16,8", "--samples", "50", "--seed", "9", "--jobs", jobs])
        .env("QNLS_OUT_DIR", dir)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    std::fs::read(dir.join("variance-scan.csv")).unwrap()
}

#[test]
fn output_is_byte_identical_and_canonically_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_into(&dir.path().join("a"), "1");
    let b = run_into(&dir.path().join("b"), "4");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let keys: Vec<(String, String)> = data_lines(&text)[1..]
        .iter()
        .map(|r| {
            let c: Vec<&str> = r.split(',').collect();
            (c[0].to_string(), c[1].to_string())
        })
        .collect();
    let alphas: Vec<f64> = keys.iter().map(|k| k.0.parse().unwrap()).collect();
    assert!(alphas.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(keys.len(), 12);
}

#[test]
fn explicit_output_path_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested").join("field.json");
    let o = qnls(&["sample", "--alpha", "0", "--N", "2", "--format", "json", "--output", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(v["data"].as_array().unwrap().len(), 13);
}
