#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use aby3_core::evaluation::Dataset;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aby3"))
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "aby3 {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Writes `d` as a CSV with a header and the label last.
pub fn write_csv(d: &Dataset, path: &Path) {
    let mut s = String::new();
    let names: Vec<String> = (0..d.cols).map(|c| format!("f{c}")).collect();
    writeln!(s, "{},label", names.join(",")).unwrap();
    for r in 0..d.rows {
        let row: Vec<String> = d.row(r).iter().map(|v| format!("{v:?}")).collect();
        writeln!(s, "{},{}", row.join(","), d.y[r]).unwrap();
    }
    fs::write(path, s).unwrap();
}

pub fn free_ports() -> Vec<String> {
    let ls: Vec<TcpListener> = (0..3)
        .map(|_| TcpListener::bind("127.0.0.1:0").unwrap())
        .collect();
    ls.iter()
        .map(|l| l.local_addr().unwrap().to_string())
        .collect()
}

/// Writes one network config per party and returns their paths.
pub fn party_configs(dir: &Path, seeds: [u64; 3], session_id: u64) -> Vec<PathBuf> {
    let peers = free_ports();
    (0..3)
        .map(|i| {
            let p = dir.join(format!("party{i}.json"));
            let cfg = serde_json::json!({
                "party_id": i,
                "peers": peers,
                "session_id": session_id,
                "seed": seeds[i],
                "connect_timeout_ms": 20000,
                "io_timeout_ms": 60000,
            });
            fs::write(&p, cfg.to_string()).unwrap();
            p
        })
        .collect()
}

/// Starts all three parties; `extra(i)` supplies per-party arguments.
pub fn spawn_parties(
    configs: &[PathBuf],
    train_config: &Path,
    extra: impl Fn(usize) -> Vec<String>,
) -> Vec<Child> {
    (0..3)
        .map(|i| {
            bin()
                .arg("run-party")
                .arg("--config")
                .arg(&configs[i])
                .arg("--train-config")
                .arg(train_config)
                .args(extra(i))
                .stdout(Stdio::piped())
                .stderr(Stdio::piped())
                .spawn()
                .unwrap()
        })
        .collect()
}

pub fn wait_all(children: Vec<Child>) -> Vec<Output> {
    children
        .into_iter()
        .map(|c| c.wait_with_output().unwrap())
        .collect()
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}
