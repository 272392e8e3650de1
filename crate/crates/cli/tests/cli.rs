use std::process::{Command, Output};

fn uupl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uupl"))
        .args(args)
        .env("RUST_LOG", "off")
        .env_remove("UUPL_PORT")
        .env_remove("UUPL_DATA_DIR")
        .output()
        .unwrap()
}

#[test]
fn simulate_writes_csv_to_stdout() {
    let out = uupl(&["simulate", "--task", "thermal", "--trials", "2", "--iters", "3", "--seed", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "task,method,trial,iteration,accuracy");
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[1].starts_with("thermal,full,0,1,"));
    assert!(String::from_utf8(out.stderr).unwrap().contains("full"));
}

#[test]
fn ablation_json_by_extension() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ab.json");
    let out = uupl(&[
        "ablation",
        "--task",
        "tabletop",
        "--trials",
        "1",
        "--iters",
        "2",
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    let names: Vec<&str> = v["methods"].as_array().unwrap().iter().map(|m| m["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["full", "no-gmm", "no-likelihood", "baseline"]);
    assert_eq!(v["task"], "tabletop");
    assert_eq!(v["iterations"], 2);
}

#[test]
fn explicit_format_wins_over_extension() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let p = path.to_str().unwrap();
    let out = uupl(&[
        "simulate", "--task", "thermal", "--method", "baseline", "--trials", "1", "--iters", "1", "--out", p,
        "--format", "csv",
    ]);
    assert!(out.status.success());
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("task,method"));
}

#[test]
fn bad_arguments_fail_with_a_diagnostic() {
    for args in [
        &["simulate", "--task", "kitchen"][..],
        &["simulate", "--task", "thermal", "--method", "best"],
        &["simulate", "--task", "thermal", "--trials", "0"],
        &["simulate", "--task", "thermal", "--iters", "0", "--trials", "1"],
        &["simulate", "--task", "thermal", "--format", "xml"],
    ] {
        let out = uupl(args);
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn env_overrides_serve_flags() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("not-a-dir");
    std::fs::write(&blocker, b"x").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_uupl"))
        .args(["serve", "--port", "0", "--data-dir"])
        .arg(dir.path().join("ok"))
        .env("UUPL_DATA_DIR", &blocker)
        .env_remove("UUPL_PORT")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not-a-dir"));
    assert!(!dir.path().join("ok").exists());

    let out = Command::new(env!("CARGO_BIN_EXE_uupl"))
        .args(["serve", "--data-dir"])
        .arg(dir.path())
        .env("UUPL_PORT", "eighty")
        .env_remove("UUPL_DATA_DIR")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("UUPL_PORT"));
}
