use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

const BIN: &str = env!("CARGO_BIN_EXE_mqttprobe");

const QOS21: &str = r#"{
  "name": "qos21",
  "sessions": [{"id": "fuzzer"}],
  "steps": [
    {"session": "fuzzer", "action": "connect"},
    {"session": "fuzzer", "action": {"subscribe": {"filter": "t", "qos": 2}}},
    {"session": "fuzzer", "action": {"publish": {"topic": "t", "qos": 2, "packet_id": 1, "payload": "one"}}},
    {"session": "fuzzer", "action": {"publish": {"topic": "t", "qos": 1, "packet_id": 1, "payload": "two"}}},
    {"session": "fuzzer", "action": {"pubrel": {"packet_id": 1}}}
  ],
  "settle_ms": 200
}"#;

// The reference broker closes on a wildcard publish, which this experiment
// does not allow.
const FORBIDDEN_CLOSE: &str = r#"{
  "name": "forbidden_close",
  "sessions": [{"id": "fuzzer"}],
  "steps": [
    {"session": "fuzzer", "action": "connect"},
    {"session": "fuzzer", "action": {"publish": {"topic": "a/+", "payload": "x"}}}
  ],
  "settle_ms": 200
}"#;

struct Served {
    child: Child,
    port: u16,
}

impl Served {
    fn start() -> Served {
        let mut child = Command::new(BIN)
            .args(["serve", "--port", "0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let port = line.trim().rsplit(':').next().unwrap().parse().unwrap();
        Served { child, port }
    }

    fn target(&self) -> String {
        format!("127.0.0.1:{}", self.port)
    }

    fn interrupt(mut self) -> i32 {
        let ok = Command::new("kill")
            .args(["-INT", &self.child.id().to_string()])
            .status()
            .unwrap();
        assert!(ok.success());
        let deadline = Instant::now() + Duration::from_secs(10);
        loop {
            if let Some(status) = self.child.try_wait().unwrap() {
                return status.code().unwrap_or(-1);
            }
            assert!(Instant::now() < deadline, "serve did not stop");
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("RUST_LOG").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn closed_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn unreachable_target_exits_one() {
    let o = run(&["run", "--target", &format!("127.0.0.1:{}", closed_port())]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("refused"), "{err}");
}

#[test]
fn diff_against_dead_target_is_a_liveness_error() {
    let o = run(&[
        "diff",
        "--target",
        &format!("127.0.0.1:{}", closed_port()),
        "--documented",
        "Mosquitto",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not answering"));
}

#[test]
fn documented_diff() {
    let o = run(&["diff", "--documented", "Mosquitto", "--documented", "EMQX"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("| qos2_then_qos1_same_id | delivered {m1} vs {m1,m2} |"), "{out}");

    let o = run(&["diff", "--documented", "Aedes", "--documented", "aedes", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["divergences"], serde_json::json!([]));
}

#[test]
fn diff_needs_two_sources() {
    let o = run(&["diff", "--documented", "Mosquitto"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["diff", "--documented", "Mosquitto", "--documented", "NoSuchBroker"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn occupied_port_is_a_bind_error() {
    let held = TcpListener::bind("0.0.0.0:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let o = run(&["serve", "--port", &port]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot bind"));
}

#[test]
fn serve_run_and_interrupt() {
    let served = Served::start();
    let dir = tempfile::tempdir().unwrap();
    let qos21 = write(dir.path(), "qos21.json", QOS21);
    let forbidden = write(dir.path(), "forbidden.json", FORBIDDEN_CLOSE);
    let traces = dir.path().join("traces");

    let o = run(&[
        "run",
        "--target",
        &served.target(),
        "--experiment",
        &qos21,
        "--format",
        "json",
        "--trace-dir",
        traces.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["tool"], "mqttprobe");
    assert_eq!(report["corpus_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(report["experiments"][0]["delivered"], serde_json::json!(["m1", "m2"]));
    assert_eq!(report["summary"]["anomalies"], 0);
    assert!(traces.join("qos21.jsonl").exists());

    // UnexpectedDisconnect is DoS: exit 2 by default, 0 when only critical fails.
    let o = run(&["run", "--target", &served.target(), "--experiment", &forbidden]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("UnexpectedDisconnect"));
    let o = run(&["run", "--target", &served.target(), "--experiment", &forbidden, "--fail-on", "critical"]);
    assert_eq!(o.status.code(), Some(0));

    // flags mirror into the environment
    let o = Command::new(BIN)
        .arg("run")
        .env("MQTTPROBE_TARGET", served.target())
        .env("MQTTPROBE_EXPERIMENT", &forbidden)
        .env("MQTTPROBE_FAIL_ON", "critical")
        .env("MQTTPROBE_FORMAT", "json")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["summary"]["threshold"], "Critical");

    let o = run(&["diff", "--target", &served.target(), "--target", &served.target(), "--experiment", &qos21]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("no divergences"));

    assert_eq!(served.interrupt(), 0);
}

#[test]
fn corpus_export_round_trips_through_run_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["corpus", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let files = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(files, mqttprobe::experiment::CORPUS_NAMES.len());
    let text = std::fs::read_to_string(dir.path().join("orphan_pubrel.json")).unwrap();
    assert_eq!(mqttprobe::experiment::parse_experiment(&text).unwrap().name, "orphan_pubrel");
}
