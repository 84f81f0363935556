use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use hrc_safety::session::protocol::{read_message, write_message, Role};
use hrc_safety::session::{Button, Edge, Message, Phase};
use tokio_tungstenite::tungstenite::Message as WsMessage;

const BIN: &str = env!("CARGO_BIN_EXE_hrc-cell");

fn repo(path: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(path)
}

fn scenario() -> PathBuf {
    repo("scenarios/engine_assembly.toml")
}

/// The shipped config on a 64x53 camera so whole runs record in a few MB.
fn small_config(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(repo("configs/calibrated.toml"))
        .unwrap()
        .replace("width = 512", "width = 64")
        .replace("height = 424", "height = 53")
        .replace("\nomega = 28.0", "\nomega = 5.0")
        .replace("delta_omega = 15.0", "delta_omega = 2.5")
        .replace("min_cluster_size = 8", "min_cluster_size = 2");
    let path = dir.join("small.toml");
    fs::write(&path, text).unwrap();
    path
}

fn hrc(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn run_writes_csv_and_json_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let csv = dir.path().join("m.csv");
    let out = hrc(&[
        "run",
        "--mode",
        "baseline",
        "--scenario",
        p(&scenario()),
        "--config",
        p(&cfg),
        "--seed",
        "2",
        "--headless",
        "--metrics",
        p(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("baseline-2 total"));
    let rows = fs::read_to_string(&csv).unwrap();
    let mut lines = rows.lines();
    assert_eq!(
        lines.next(),
        Some("run_id,mode,total_time_s,robot_idle_time_s,halts,confirmations")
    );
    assert!(lines.next().unwrap().starts_with("baseline-2,baseline,"));

    let json = dir.path().join("m.json");
    let out = hrc(&[
        "run",
        "--mode",
        "ar",
        "--scenario",
        p(&scenario()),
        "--config",
        p(&cfg),
        "--metrics",
        p(&json),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("task 1"), "event log expected without --headless");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(m["run_id"], "ar-1");
    assert!(m["robot_idle_time_s"].as_f64().unwrap() <= m["total_time_s"].as_f64().unwrap());
}

#[test]
fn recorded_run_replays_to_the_same_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let stream = dir.path().join("run.dstr");
    let out = hrc(&[
        "run",
        "--mode",
        "ar",
        "--scenario",
        p(&scenario()),
        "--config",
        p(&cfg),
        "--seed",
        "4",
        "--headless",
        "--record",
        p(&stream),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let recorded = fs::read_to_string(dir.path().join("run.dstr.verdicts.log")).unwrap();

    let out = hrc(&["replay", "--stream", p(&stream)]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("# parameters match the recording"));
    let replayed: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(replayed, recorded.lines().collect::<Vec<_>>());

    let tau = dir.path().join("tau.toml");
    fs::write(
        &tau,
        fs::read_to_string(&cfg).unwrap().replace("tau = 0.05", "tau = 0.2"),
    )
    .unwrap();
    let out = hrc(&["replay", "--stream", p(&stream), "--config", p(&tau)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("# parameters differ from the recording"));
    assert!(text.contains("tau: 0.2"));
    assert_eq!(
        text.lines().filter(|l| !l.starts_with('#')).count(),
        recorded.lines().count()
    );

    // cut the stream in half
    let bytes = fs::read(&stream).unwrap();
    fs::write(&stream, &bytes[..bytes.len() / 2]).unwrap();
    let out = hrc(&["replay", "--stream", p(&stream)]);
    assert!(!out.status.success());
    let partial: Vec<String> = stdout(&out)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect();
    assert!(!partial.is_empty() && partial.len() < recorded.lines().count());
    assert!(recorded.lines().zip(&partial).all(|(a, b)| a == b));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replay stopped after"));
}

#[test]
fn bad_input_fails_cleanly() {
    let out = hrc(&["run", "--mode", "sideways", "--scenario", p(&scenario())]);
    assert_eq!(out.status.code(), Some(2));
    let out = hrc(&["run", "--mode", "ar", "--scenario", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/scenario.toml"));
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("junk.dstr");
    fs::write(&stream, b"junk").unwrap();
    fs::write(dir.path().join("junk.dstr.annotations.jsonl"), b"{}").unwrap();
    let out = hrc(&["replay", "--stream", p(&stream)]);
    assert_eq!(out.status.code(), Some(1));
}

struct Server {
    child: Child,
    addr: String,
}

impl Server {
    fn start(args: &[&str]) -> Self {
        let mut child = Command::new(BIN)
            .arg("serve")
            .args(args)
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .expect("address line")
            .to_string();
        Server { child, addr }
    }

    fn connect(&self) -> TcpStream {
        let s = TcpStream::connect(&self.addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        s
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn send(s: &mut TcpStream, msg: &Message) {
    write_message(s, msg).unwrap();
}

fn send_raw(s: &mut TcpStream, payload: &[u8]) {
    s.write_all(&(payload.len() as u32).to_be_bytes()).unwrap();
    s.write_all(payload).unwrap();
}

fn button(button: Button) -> Message {
    Message::Button {
        button,
        edge: Edge::Press,
    }
}

fn hello(role: Role) -> Message {
    Message::Hello {
        role,
        client: "test".into(),
    }
}

/// Next message that is not a snapshot.
fn reply(s: &mut TcpStream) -> Message {
    loop {
        match read_message(s).unwrap().expect("server closed the connection") {
            Message::Snapshot(_) => {}
            m => return m,
        }
    }
}

fn error_text(m: Message) -> String {
    match m {
        Message::Error { message } => message,
        other => panic!("expected an error, got {other:?}"),
    }
}

#[test]
fn serve_enforces_one_operator_and_survives_bad_messages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let server = Server::start(&[
        "--port",
        "0",
        "--scenario",
        p(&scenario()),
        "--config",
        p(&cfg),
        "--speed",
        "4",
    ]);

    let mut a = server.connect();
    let Some(Message::Snapshot(first)) = read_message(&mut a).unwrap() else {
        panic!("a new client gets the latest snapshot");
    };
    assert_eq!(first.phase, Phase::Idle);
    assert_eq!(first.schema_version, 1);

    send_raw(&mut a, br#"{"type":"teleport","schema_version":1}"#);
    assert!(error_text(reply(&mut a)).contains("unknown message type"));
    send_raw(&mut a, b"not json");
    assert!(error_text(reply(&mut a)).contains("malformed"));
    send_raw(&mut a, br#"{"type":"button","button":"go","edge":"press"}"#);
    assert!(error_text(reply(&mut a)).contains("schema_version"));
    send(&mut a, &button(Button::Go));
    assert!(error_text(reply(&mut a)).contains("operator role not held"));
    send(&mut a, &Message::ConfirmAck { confirmed: vec![1] });
    assert!(error_text(reply(&mut a)).contains("server-to-client"));

    send(&mut a, &hello(Role::Operator));
    assert!(matches!(
        reply(&mut a),
        Message::Hello {
            role: Role::Operator,
            ..
        }
    ));
    let mut b = server.connect();
    send(&mut b, &hello(Role::Operator));
    assert!(error_text(reply(&mut b)).contains("already held"));
    send(&mut b, &button(Button::Stop));
    assert!(error_text(reply(&mut b)).contains("operator role not held"));

    // GO without ENABLE does nothing; with ENABLE the robot starts
    send(&mut a, &button(Button::Go));
    send(&mut a, &button(Button::Enable));
    send(&mut a, &button(Button::Go));
    let deadline = Instant::now() + Duration::from_secs(10);
    let running = loop {
        assert!(Instant::now() < deadline, "robot never started");
        if let Some(Message::Snapshot(s)) = read_message(&mut a).unwrap() {
            if s.phase != Phase::Idle {
                break s;
            }
        }
    };
    assert_eq!(running.phase, Phase::RobotRunning);
    assert!(running.buttons.enable_held);

    // the role frees up when its holder leaves
    drop(a);
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        send(&mut b, &hello(Role::Operator));
        if matches!(
            reply(&mut b),
            Message::Hello {
                role: Role::Operator,
                ..
            }
        ) {
            break;
        }
        assert!(Instant::now() < deadline, "operator role was not released");
        std::thread::sleep(Duration::from_millis(50));
    }

    // an impossible frame length ends the connection, not the server
    let mut c = server.connect();
    c.write_all(&u32::MAX.to_be_bytes()).unwrap();
    assert!(error_text(reply(&mut c)).contains("exceeds"));
    assert!(read_message(&mut c).map_or(true, |m| m.is_none()));
    let mut d = server.connect();
    assert!(matches!(read_message(&mut d).unwrap(), Some(Message::Snapshot(_))));
}

const REACH_IN: &str = r#"
[[intrusion]]
anchor = "segment:place_frame"
offset = 5.5
modes = ["ar"]
keys = [
    { t = 0.0, elbow = [-1.80, 0.20, 0.60], hand = [-1.45, 0.20, 0.60] },
    { t = 1.0, elbow = [-0.95, 0.20, 0.60], hand = [-0.60, 0.20, 0.60] },
    { t = 2.0, elbow = [-0.95, 0.20, 0.60], hand = [-0.60, 0.20, 0.60] },
    { t = 3.0, elbow = [-1.80, 0.20, 0.60], hand = [-1.45, 0.20, 0.60] },
]
"#;

#[tokio::test]
async fn websocket_observer_sees_the_halt_and_the_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("reach.toml");
    fs::write(
        &scen,
        format!("{}\n{REACH_IN}", fs::read_to_string(scenario()).unwrap()),
    )
    .unwrap();
    let server = Server::start(&[
        "--port",
        "0",
        "--scenario",
        p(&scen),
        "--seed",
        "3",
        "--speed",
        "200",
        "--snapshot-rate",
        "10",
        "--auto-operator",
        "--fence",
    ]);
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/ws", server.addr))
        .await
        .unwrap();

    ws.send(WsMessage::text(hello(Role::Observer).to_json())).await.unwrap();
    ws.send(WsMessage::text(r#"{"type":"teleport","schema_version":1}"#))
        .await
        .unwrap();
    ws.send(WsMessage::text(button(Button::Go).to_json())).await.unwrap();

    let (mut errors, mut saw_hello, mut saw_halt, mut fenced) = (Vec::new(), false, false, false);
    let metrics = tokio::time::timeout(Duration::from_secs(120), async {
        while let Some(frame) = ws.next().await {
            let WsMessage::Text(text) = frame.unwrap() else {
                continue;
            };
            match Message::from_json(text.as_str()).expect("every frame parses") {
                Message::Hello { role, .. } => saw_hello = role == Role::Observer,
                Message::Error { message } => errors.push(message),
                Message::Snapshot(s) => {
                    saw_halt |= s.phase == Phase::Halted;
                    fenced |= s.fence.is_some();
                }
                Message::Metrics(m) => return m,
                _ => {}
            }
        }
        panic!("server closed before the metrics");
    })
    .await
    .expect("run finished in time");

    assert!(saw_hello);
    assert_eq!(errors.len(), 2, "{errors:?}");
    assert!(errors[0].contains("unknown message type"));
    assert!(errors[1].contains("operator role not held"));
    assert!(saw_halt, "observer never saw the halted phase");
    assert!(fenced);
    assert_eq!(metrics.halts, 1);
}
