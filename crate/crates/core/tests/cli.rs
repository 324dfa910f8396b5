mod common;

use std::net::UdpSocket;
use std::path::Path;
use std::process::{Command, Output};

use common::{free_port, scenario_path};

fn xc_mrta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xc-mrta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_writes_outputs_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = xc_mrta(&["simulate", p(&scenario_path("default")), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("tasks completed: 3/3"));
    for f in ["trace.csv", "metrics.csv", "timeline.csv", "summary.txt"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn bad_scenarios_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.scenario");
    assert_eq!(xc_mrta(&["simulate", p(&missing)]).status.code(), Some(2));

    let bad = dir.path().join("bad.scenario");
    std::fs::write(&bad, "comm_radius = -1.0\n[config]\ntheta = 10\nomega = 20.0\n").unwrap();
    let out = xc_mrta(&["simulate", p(&bad), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn exhausted_budget_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("short.scenario");
    std::fs::write(
        &s,
        "duration = 3.0\ncomm_radius = 5.0\n[config]\ntheta = 10\nomega = 20.0\n\
         [[robot]]\nid = 1\nx = 0.5\ny = 0.5\nbattery = 0.9\n\
         [[task]]\nid = \"T1\"\nx = 3.0\ny = 5.5\ntime = 1.0\n",
    )
    .unwrap();
    let out = xc_mrta(&["simulate", p(&s), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn node_runs_bounded_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let port = free_port().to_string();
    let peer = format!("127.0.0.1:{}", free_port());
    let goals = dir.path().join("goals.csv");
    let actions = dir.path().join("actions.csv");
    let feedback = dir.path().join("feedback.csv");
    let out = xc_mrta(&[
        "node",
        "--id",
        "1",
        "--port",
        &port,
        "--goals",
        p(&goals),
        "--actions",
        p(&actions),
        "--feedback",
        p(&feedback),
        "--round-period",
        "0.05",
        "--max-rounds",
        "5",
        "--peers",
        &peer,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(goals.is_file() && feedback.is_file());
}

#[test]
fn node_port_in_use_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let held = UdpSocket::bind("0.0.0.0:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let f = |n: &str| dir.path().join(n);
    let out = xc_mrta(&[
        "node",
        "--id",
        "1",
        "--port",
        &port,
        "--goals",
        p(&f("g")),
        "--actions",
        p(&f("a")),
        "--feedback",
        p(&f("f")),
        "--max-rounds",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn node_unusable_gateway_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let inside = blocker.join("goals.csv");
    let port = free_port().to_string();
    let out = xc_mrta(&[
        "node",
        "--id",
        "1",
        "--port",
        &port,
        "--goals",
        p(&inside),
        "--actions",
        p(&dir.path().join("a")),
        "--feedback",
        p(&dir.path().join("f")),
        "--max-rounds",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn node_invalid_parameters_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = |n: &str| dir.path().join(n);
    let out = xc_mrta(&[
        "node",
        "--id",
        "1",
        "--goals",
        p(&f("g")),
        "--actions",
        p(&f("a")),
        "--feedback",
        p(&f("f")),
        "--round-period",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
