use std::io::Write;
use std::process::{Command, Output, Stdio};

fn run(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_presburger"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

#[test]
fn stats_on_the_worked_example() {
    let src = "E[17*x+25 % 23] (y1,y2) : 2*y1 < 3*y2 && 4*y2 < 56 && \
               E>=343 (y) : -13*x+2 < 3*x+y-2 && 57*x == 2*y+27 (mod 13)";
    let o = run(&["stats", "-"], src);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("Coeff = {0, ±1, ±2, ±3, ±4, ±16}"), "{out}");
    assert!(out.contains("Const = {0, ±1, ±2, ±4, ±56}"), "{out}");
    assert!(out.contains("Mod = {1, 13, 23}"), "{out}");
    assert!(out.contains("P = {0, ±1, ±2, ±3, ±4, 13, ±16, 23}"), "{out}");
}

#[test]
fn stats_on_a_ground_atom() {
    let out = stdout(&run(&["stats", "-"], "0 < 0"));
    assert!(out.contains("Coeff = {0, ±1, ±2}") && out.contains("qd = 0") && out.contains("block depth = 0"), "{out}");
}

#[test]
fn decide_reports_both_verdicts_with_exit_zero() {
    let o = run(&["decide", "-"], "E x : 0 < x && x < 2");
    assert_eq!((o.status.code(), stdout(&o).as_str()), (Some(0), "true"));
    let o = run(&["decide", "--strategy", "bounded", "--bound", "64", "-"], "E x : 0 < x && x < 1");
    assert_eq!((o.status.code(), stdout(&o).as_str()), (Some(0), "false"));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["decide", "-"], "E x : 0 < x &&").status.code(), Some(2));
    assert_eq!(run(&["decide", "-"], "0 < x").status.code(), Some(2));
    let o = run(&["decide", "--strategy", "paper", "-"], "E x : 0 < x && x < 2");
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("GlobalD"));
}

#[test]
fn qe_emits_json_and_certificates() {
    let o = run(&["qe", "--emit", "json", "--cert", "-"], "E x : 2*x = y");
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["formula"].is_object());
    assert_eq!(v["certificates"].as_array().unwrap().len(), 2);
    let o = run(&["qe", "--simplify", "-"], "E x : 2*x = y");
    assert_eq!(stdout(&o), "0 == 1*y (mod 2)");
}

#[test]
fn transform_removes_counting_quantifiers() {
    let out = stdout(&run(&["transform", "--stage", "all", "-"], "E>=2 (y) : 0 < y && y < z"));
    assert!(!out.contains("E>=") && !out.contains("E="), "{out}");
}

#[test]
fn oracle_counts_witnesses() {
    let o = run(&["oracle", "--bound", "16", "--set", "z=5", "-"], "E>=2 (y) : 0 < y && y < z");
    assert_eq!(stdout(&o), "true (witnesses: 4)");
}

#[test]
fn difftest_is_deterministic_and_config_file_is_read() {
    let dir = std::env::temp_dir().join(format!("presburger-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "seed = 4\ncount = 6\n# flags win over this\ndepth = 2\n").unwrap();
    let args = ["difftest", "--config", cfg.to_str().unwrap(), "--depth", "1", "--emit", "json"];
    let a = run(&args, "");
    let b = run(&args, "");
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!((v["seed"].as_u64(), v["instances"].as_u64()), (Some(4), Some(6)));
    std::fs::remove_dir_all(dir).ok();
}
