use std::path::Path;
use std::process::{Command, Output};

fn bygars(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bygars"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn preset(dir: &Path, name: &str, args: &[&str]) {
    let out = bygars(&[&["preset"], args].concat(), dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::write(dir.join(name), out.stdout).unwrap();
}

fn shrink(dir: &Path, name: &str, iterations: usize) {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    let text = text
        .lines()
        .map(|l| {
            if l.starts_with("iterations =") {
                format!("iterations = {iterations}")
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(path, text).unwrap();
}

#[test]
fn run_is_reproducible_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    preset(d, "r.toml", &["--attacks", "benign:2+gaussian:2"]);
    shrink(d, "r.toml", 95);
    for out in ["a", "b"] {
        let o = bygars(&["run", "--config", "r.toml", "--out", out], d);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(d.join("a/metrics.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b/metrics.csv")).unwrap());
    // header plus ceil(95 / 10) + 1 rows
    assert_eq!(String::from_utf8(a.clone()).unwrap().lines().count(), 1 + 11);
    assert!(d.join("a/timing.csv").exists());

    let o = bygars(&["run", "--config", "r.toml", "--seed", "7", "--out", "c"], d);
    assert!(o.status.success());
    assert_ne!(a, std::fs::read(d.join("c/metrics.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "schema_version = 1\nbogus_key = 3\n").unwrap();
    assert_eq!(bygars(&["run", "--config", "bad.toml"], d).status.code(), Some(1));
    assert_eq!(bygars(&["run", "--config", "missing.toml"], d).status.code(), Some(1));
    assert_eq!(bygars(&["frobnicate"], d).status.code(), Some(1));

    // output directory path is an existing file
    preset(d, "r.toml", &["--attacks", "benign:2"]);
    shrink(d, "r.toml", 5);
    assert_eq!(
        bygars(&["run", "--config", "r.toml", "--out", "bad.toml"], d)
            .status
            .code(),
        Some(2)
    );

    preset(d, "t.toml", &["--theorem", "--attacks", "benign:2"]);
    let o = bygars(&["verify", "--config", "t.toml", "--checks", ""], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no checks"));
    assert_eq!(
        bygars(&["verify", "--config", "t.toml", "--checks", "krum"], d)
            .status
            .code(),
        Some(1)
    );

    // 40 iterations cannot shrink the distance to 5%
    shrink(d, "t.toml", 40);
    let o = bygars(&["verify", "--config", "t.toml", "--checks", "convergence"], d);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn verify_writes_one_record_per_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    preset(d, "t.toml", &["--theorem", "--attacks", "benign:1+sign_flip:2"]);
    let o = bygars(
        &[
            "verify",
            "--config",
            "t.toml",
            "--checks",
            "q_recursion,equilibrium",
            "--out",
            "rep/r.jsonl",
        ],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = std::fs::read_to_string(d.join("rep/r.jsonl")).unwrap();
    let checks: Vec<String> = text
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["check"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(checks, ["q_recursion", "equilibrium"]);
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    preset(d, "r.toml", &["--aggregator", "bygars", "--attacks", "benign:4"]);
    shrink(d, "r.toml", 30);
    let o = bygars(
        &[
            "sweep", "--config", "r.toml", "--axis", "k_meta", "--values", "1;2", "--seeds", "0,1", "--out", "s",
        ],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(d.join("s/sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.starts_with("k_meta,seed,"));
    let o = bygars(
        &[
            "sweep", "--config", "r.toml", "--axis", "depth", "--values", "1", "--seeds", "0",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn export_data_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    preset(d, "c.toml", &["--task", "classification", "--attacks", "benign:2"]);
    let o = bygars(&["export-data", "--config", "c.toml", "--out", "data.csv"], d);
    assert!(o.status.success());
    let file = std::fs::File::open(d.join("data.csv")).unwrap();
    let ds = bygars::data::read_dataset(std::io::BufReader::new(file)).unwrap();
    assert_eq!(ds.kind(), bygars::TaskKind::Classification);
    assert_eq!(ds.len(), 10_000);
}
