use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use futures_util::StreamExt;
use kinon::io::decode_pgm;
use kinon_steer::protocol::parse_server;
use kinon_steer::ServerMessage;
use tokio_tungstenite::tungstenite::Message;

fn kinon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinon")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const RING: &str = r#"
[topology]
kind = "ring"
n = 24

[initial]
kind = "singularity"
positions = [3]

[[maps]]
from_step = 0
map = { kind = "gamma", gamma = 0.5 }

[run]
steps = 99
"#;

#[test]
fn run_writes_frames_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("ring.toml");
    fs::write(&scenario, RING).unwrap();
    let out = dir.path().join("out");
    let result = kinon(&["run", "--scenario", path(&scenario), "--out", path(&out)]);
    assert_eq!(code(&result), 0, "{}", String::from_utf8_lossy(&result.stderr));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 100);
    assert!(out.join("frame_000099.pgm").exists());
    let (w, h, _) = decode_pgm(&fs::read(out.join("spacetime.pgm")).unwrap()).unwrap();
    assert_eq!((w, h), (24, 100));
}

#[test]
fn malformed_scenario_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("bad.toml");
    fs::write(&scenario, RING.replace("n = 24", "n = 2")).unwrap();
    let out = dir.path().join("out");
    let result = kinon(&["run", "--scenario", path(&scenario), "--out", path(&out)]);
    assert_eq!(code(&result), 2);
    let stderr = String::from_utf8(result.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.contains("topology.n"));
    assert!(!out.exists());

    fs::write(&scenario, "[topology\n").unwrap();
    assert_eq!(code(&kinon(&["run", "--scenario", path(&scenario), "--out", path(&out)])), 2);
    assert_eq!(code(&kinon(&["run", "--preset", "fig9", "--out", path(&out), "--frame-every", "0"])), 2);
    assert_eq!(code(&kinon(&["run", "--preset", "fig9", "--out", path(&out), "--seed", "18446744073709551615"])), 2);
    assert!(!out.exists());
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let result = kinon(&["run", "--preset", "fig14", "--out", path(&out), "--steps", "30", "--frame-every", "10", "--seed", "77"]);
        assert_eq!(code(&result), 0);
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn sweep_rows_are_sorted() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let result = kinon(&["sweep", "--family", "gain", "--k-min", "0.5", "--k-max", "4.0", "--k-count", "4", "--out", path(&out)]);
    assert_eq!(code(&result), 0, "{}", String::from_utf8_lossy(&result.stderr));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let ks: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ks, [0.5, 1.6666666666666667, 2.8333333333333335, 4.0]);

    for bad in [&["--k-min", "2", "--k-max", "2", "--k-count", "4"][..], &["--k-min", "1", "--k-max", "2", "--k-count", "1"]] {
        let mut args = vec!["sweep", "--family", "gain", "--out", path(&out)];
        args.extend_from_slice(bad);
        assert_eq!(code(&kinon(&args)), 2);
    }
    assert_eq!(code(&kinon(&["sweep", "--family", "tanh", "--k-min", "1", "--k-max", "2", "--k-count", "2", "--out", path(&out)])), 2);
    assert_eq!(code(&kinon(&["sweep", "--family", "gain", "--k-min", "1", "--k-max", "2", "--k-count", "2", "--steps", "100", "--out", path(&out)])), 2);
}

#[test]
fn render_space_time_and_contact_sheet() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("ring.toml");
    fs::write(&scenario, RING).unwrap();
    let frames = dir.path().join("frames");
    assert_eq!(code(&kinon(&["run", "--scenario", path(&scenario), "--out", path(&frames)])), 0);
    let image = dir.path().join("st.pgm");
    assert_eq!(code(&kinon(&["render", "--frames", path(&frames), "--out", path(&image)])), 0);
    let bytes = fs::read(&image).unwrap();
    assert_eq!(decode_pgm(&bytes).unwrap().1, 100);
    assert_eq!(bytes, fs::read(frames.join("spacetime.pgm")).unwrap());
    assert_eq!(code(&kinon(&["render", "--frames", path(&frames), "--out", path(&image)])), 0);
    assert_eq!(fs::read(&image).unwrap(), bytes);

    let grid = dir.path().join("grid");
    assert_eq!(code(&kinon(&["run", "--preset", "fig11", "--out", path(&grid), "--steps", "20"])), 0);
    let sheet = dir.path().join("sheet.pgm");
    assert_eq!(code(&kinon(&["render", "--frames", path(&grid), "--out", path(&sheet)])), 0);
    let (w, h, _) = decode_pgm(&fs::read(&sheet).unwrap()).unwrap();
    assert_eq!((w, h), (3 * 128 + 2 * 2, 2 * 128 + 2));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(code(&kinon(&["render", "--frames", path(&empty), "--out", path(&sheet)])), 2);
    assert_eq!(code(&kinon(&["render", "--frames", path(&dir.path().join("missing")), "--out", path(&sheet)])), 2);
}

struct Serving(Child);

impl Drop for Serving {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(args: &[&str]) -> (Serving, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_kinon")).arg("serve").args(args).stdout(Stdio::piped()).spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("{line:?}")).to_string();
    (Serving(child), url)
}

#[tokio::test]
async fn serve_greets_with_the_preset() {
    let (_server, url) = serve(&["--preset", "fig10", "--port", "0"]);
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
    let Some(Ok(Message::Text(text))) = ws.next().await else { panic!("no hello") };
    let ServerMessage::Hello(hello) = parse_server(&text).unwrap() else { panic!("{text}") };
    assert_eq!((hello.width, hello.height, hello.step, hello.paused), (128, 128, 0, true));
}

#[test]
fn serve_bind_failures_exit_4() {
    assert_eq!(code(&kinon(&["serve", "--preset", "fig10", "--port", "70000"])), 4);
    assert_eq!(code(&kinon(&["serve", "--preset", "fig10", "--bind", "not-an-address"])), 4);
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    assert_eq!(code(&kinon(&["serve", "--preset", "fig10", "--port", &port])), 4);
    assert_eq!(code(&kinon(&["serve", "--preset", "fig99"])), 2);
}
