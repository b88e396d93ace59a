use std::path::Path;
use std::process::{Command, Output};

fn dpor(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpor"))
        .arg("--dir")
        .arg(dir)
        .args(["--seed", "5"])
        .args(args)
        .output()
        .expect("spawn dpor")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn end_to_end_session() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let text = b"the quick brown fox jumps over the lazy dog, several blocks worth of data here";
    fs_write(dir.join("in.txt"), text);
    fs_write(dir.join("patch.txt"), b"PATCHED");

    ok(&dpor(dir, &["keygen", "--n", "16", "--m", "8"]));
    assert!(ok(&dpor(dir, &["init", "--file", dir.join("in.txt").to_str().unwrap()])).starts_with("blocks="));
    assert_eq!(ok(&dpor(dir, &["read"])).as_bytes(), text);

    let patch = dir.join("patch.txt");
    ok(&dpor(dir, &["write", "--modify", "0", "--data", patch.to_str().unwrap()]));
    ok(&dpor(dir, &["write", "--insert", "1", "--data", patch.to_str().unwrap()]));
    ok(&dpor(dir, &["write", "--delete", "2"]));
    assert_eq!(ok(&dpor(dir, &["read", "--index", "0"])), "PATCHED");
    let current = ok(&dpor(dir, &["read"]));

    let audit = ok(&dpor(dir, &["audit", "--trials", "3"]));
    assert_eq!(audit.lines().count(), 3);
    assert!(audit.lines().all(|l| l.contains("\"passed\":true")));

    let out = dir.join("extracted.bin");
    ok(&dpor(dir, &["extract", "--out", out.to_str().unwrap()]));
    assert_eq!(std::fs::read(&out).unwrap(), current.as_bytes());

    // wipe everything: audits must now fail with the verification exit code
    ok(&dpor(dir, &["attack", "--mode", "delete:all:1"]));
    let failed = dpor(dir, &["audit"]);
    assert_eq!(failed.status.code(), Some(2));
    let err = String::from_utf8_lossy(&failed.stderr);
    assert!(err.contains("\"error\":\"verification\""), "{err}");
    assert_eq!(dpor(dir, &["extract", "--out", out.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(dpor(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    // no state yet
    let o = dpor(tmp.path(), &["read"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"error\":\"usage\""));
    assert_eq!(dpor(tmp.path(), &["write", "--modify", "0"]).status.code(), Some(1));
    assert_eq!(dpor(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn bench_json_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ok(&dpor(tmp.path(), &["bench", "--n", "4,8", "--trials", "1", "--json"]));
    let rows: Vec<serde_json::Value> = o.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["n"], 8);
    assert!(rows.iter().all(|r| r["audit_residual"].as_f64().unwrap() > 0.0));
}

fn fs_write(p: impl AsRef<Path>, b: &[u8]) {
    std::fs::write(p, b).unwrap();
}
