// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_goldfish"));
    c.env_remove("GOLDFISH_STORE").env_remove("GOLDFISH_ADDR");
    c
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

struct Node {
    child: Child,
    addr: String,
}

impl Node {
    fn start(extra: &[&str]) -> Self {
        let addr = format!("127.0.0.1:{}", free_port());
        let child = bin()
            .args(["node", "start", "--listen", &addr, "--no-external-state"])
            .args(extra)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let node = Self { child, addr };
        let deadline = Instant::now() + Duration::from_secs(20);
        while !node.run(&["status"]).status.success() {
            assert!(Instant::now() < deadline, "node never came up");
            std::thread::sleep(Duration::from_millis(50));
        }
        node
    }

    fn run(&self, args: &[&str]) -> Output {
        bin().arg("--addr").arg(&self.addr).args(args).output().unwrap()
    }
}

impl Drop for Node {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn deploy_invoke_bench_stop() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("guests").arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("echo.wasm").exists());

    let mut node = Node::start(&["--nodes", "2"]);
    let echo = dir.path().join("echo.wasm");
    let out = node.run(&["deploy", "echo", echo.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let out = node.run(&["invoke", "echo", "--payload", "hi", "--wait"]);
    assert!(out.status.success(), "{out:?}");
    assert_eq!(stdout(&out), "hi\n");

    let counter = dir.path().join("counter.wasm");
    assert!(node.run(&["deploy", "counter", counter.to_str().unwrap()]).status.success());
    let replies: Vec<String> = (0..3)
        .map(|_| stdout(&node.run(&["invoke", "counter", "--wait"])).trim().to_owned())
        .collect();
    assert_eq!(replies, ["1", "2", "3"]);

    let payload = dir.path().join("payload.bin");
    std::fs::write(&payload, b"from a file").unwrap();
    let out = node.run(&["invoke", "echo", "--payload-file", payload.to_str().unwrap(), "--wait"]);
    assert_eq!(stdout(&out), "from a file\n");

    let status = node.run(&["status", "--json"]);
    let json: serde_json::Value = serde_json::from_slice(&status.stdout).unwrap();
    assert_eq!(json["middleware"].as_array().unwrap().len(), 2);
    assert!(stdout(&node.run(&["status"])).contains("node node/0"));

    let csv = dir.path().join("report.csv");
    let out = node.run(&[
        "bench",
        "--shape",
        "chained",
        "--input-size",
        "64",
        "--parallelism",
        "2",
        "--mode",
        "inactor_state",
        "--repetitions",
        "3",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let report = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "shape,mode,input_bytes,parallelism,rep,latency_ms,throughput_rps");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("CHAINED,INACTOR_STATE,64,2,mean,"));

    let out = node.run(&["invoke", "ghost", "--wait"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no route"));

    let out = node.run(&["node", "stop"]);
    assert!(stdout(&out).contains("drained=true"), "{out:?}");
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        if let Some(code) = node.child.try_wait().unwrap() {
            assert!(code.success());
            break;
        }
        assert!(Instant::now() < deadline, "node did not exit");
        std::thread::sleep(Duration::from_millis(50));
    }
}

#[test]
fn zero_max_actors_is_config_invalid() {
    let port = free_port().to_string();
    let out = bin()
        .args(["node", "start", "--listen", &format!("127.0.0.1:{port}"), "--max-actors", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ConfigInvalid"));
}

#[test]
fn busy_port_is_reported() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let out = bin().args(["node", "start", "--listen", &addr]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PortInUse"));
}

#[test]
fn bad_store_backend_is_config_invalid() {
    let out = bin()
        .env("GOLDFISH_STORE", "redis://nowhere")
        .args(["node", "start", "--listen", "127.0.0.1:0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn in_process_bench_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("fanout.csv");
    let out = bin()
        .args(["bench", "--shape", "fanout", "--parallelism", "4", "--repetitions", "2", "--in-process", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 4);
}
