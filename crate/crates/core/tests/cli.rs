use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn swift(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swift"))
        .args(args)
        .current_dir(dir)
        .env_remove("SWIFT_SEED")
        .output()
        .unwrap()
}

fn gen_model(dir: &Path) {
    let out = swift(
        &["model", "gen", "--out", "m.swft", "--blocks", "3", "--d-model", "32", "--d-ff", "64", "--planted", "1,4"],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_inspect_run() {
    let dir = tempfile::tempdir().unwrap();
    gen_model(dir.path());
    let out = swift(&["model", "inspect", "--model", "m.swft"], dir.path());
    let info: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(info["sublayers"], 6);

    let out = swift(
        &["run", "--model", "m.swft", "--prompt", "hello", "--max-new-tokens", "40", "--gamma", "16", "--skip-ratio", "0.34", "--report", "r.json", "--csv", "t.csv", "--mask-dump", "masks.json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["matches_vanilla"], true);
    assert_eq!(report["global"]["emitted"], 40);
    assert!(fs::read_to_string(dir.path().join("t.csv")).unwrap().starts_with("segment,"));
    assert!(dir.path().join("masks.json").exists());
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    gen_model(dir.path());
    let code = |args: &[&str]| swift(args, dir.path()).status.code();
    assert_eq!(code(&["run", "--model", "m.swft", "--prompt", "x", "--skip-ratio", "0.99"]), Some(2));
    assert_eq!(code(&["run", "--model", "absent.swft", "--prompt", "x"]), Some(3));
    fs::write(dir.path().join("bad.jsonl"), "{}\n").unwrap();
    assert_eq!(code(&["run", "--model", "m.swft", "--dataset", "bad.jsonl"]), Some(3));
    assert_eq!(code(&["run", "--model", "m.swft"]), Some(2));
    fs::write(dir.path().join("c.yaml"), "no-such-knob: 1\n").unwrap();
    assert_eq!(code(&["run", "--model", "m.swft", "--prompt", "x", "--config", "c.yaml"]), Some(2));
}
