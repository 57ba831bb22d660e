use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relu-ocp"))
}

#[test]
fn single_max_sweep_writes_csv_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table.csv");
    let status = bin()
        .args(["run", "--example", "single-max", "--alpha", "1e-1", "--dx", "1/8,1/16", "--format", "csv", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("example,alpha,dx,cost"));
    assert!(lines[1].starts_with("single-max,1e-1,1.25e-1,"));
    assert!(lines[1].ends_with(",true"));
}

#[test]
fn json_output_parses() {
    let output = bin()
        .args(["run", "--example", "two-layer-nonmono", "--alpha", "1e-2", "--dx", "0.25", "--format", "json"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let v: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(v["example"], "two-layer-nonmono");
    assert_eq!(v["nu"], 0.7);
    assert!(v["cells"][0]["records"].as_array().unwrap().len() > 1);
}

#[test]
fn iteration_cap_gives_nonzero_exit() {
    let status = bin()
        .args(["run", "--example", "single-max", "--alpha", "1e-1", "--dx", "1/8", "--max-outer", "1"])
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn invalid_arguments_are_rejected() {
    let status = bin()
        .args(["run", "--example", "single-max", "--alpha", "1e-1", "--dx", "-1/8"])
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(!status.success());
    let status = bin()
        .args(["run", "--example", "single-max", "--alpha", "1e-1", "--dx", "1/8", "--nu", "1.5"])
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
