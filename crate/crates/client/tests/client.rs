use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use teleop_client::{Client, ClientError};
use teleop_core::api::{MetricsRequest, RunRequest};
use teleop_core::plant::PlantModel;
use teleop_core::protocol::{EventKind, Message, OperatorInput};
use teleop_core::scenario::{
    compute_metrics, read_log, run_scenario, LogFormat, MetricsParams, OperatorSource,
    ScenarioConfig,
};
use teleop_core::teleop::TeleopMode;
use teleop_server::{start, Mode};

const TELEOP: &str = env!("CARGO_BIN_EXE_teleop");

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}"))
}

fn any_port() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 0))
}

fn point_mass(duration: f64) -> ScenarioConfig {
    ScenarioConfig::new(PlantModel::PointMass { mass: 1.0 }, duration)
}

fn request(cfg: ScenarioConfig, format: Option<LogFormat>) -> RunRequest {
    RunRequest {
        scenario: cfg,
        delay: None,
        seed: None,
        format,
    }
}

#[tokio::test]
async fn run_and_metrics_round_trip() {
    let server = start(any_port(), Mode::Idle).await.unwrap();
    let c = Client::new(server.url() + "/");
    assert_eq!(c.health().await.unwrap().mode, "idle");

    let resp = c
        .run(&request(point_mass(1.0), Some(LogFormat::Jsonl)))
        .await
        .unwrap();
    let m = c
        .metrics(&MetricsRequest {
            log: resp.log.clone().unwrap(),
            format: LogFormat::Jsonl,
            x_b: Some(resp.meta.x_b),
        })
        .await
        .unwrap();
    assert_eq!(Some(m), resp.metrics);
}

#[tokio::test]
async fn server_errors_are_typed() {
    let server = start(any_port(), Mode::Idle).await.unwrap();
    let c = Client::new(server.url());

    let mut bad = point_mass(1.0);
    bad.duration = -1.0;
    match c.run(&request(bad, None)).await {
        Err(ClientError::Server { status, message }) => {
            assert_eq!(status.as_u16(), 400);
            assert!(message.contains("duration"), "{message}");
        }
        other => panic!("expected a 400, got {other:?}"),
    }

    let mut diverging = point_mass(1.0);
    diverging.plant = PlantModel::PointMass { mass: 1e-307 };
    diverging.reference = teleop_core::scenario::Reference::Circle {
        center: teleop_core::Vec3::zeros(),
        radius: 0.1,
        period: 5.0,
    };
    match c.run(&request(diverging, None)).await {
        Err(ClientError::Aborted(resp)) => {
            assert!(resp.aborted.as_deref().unwrap().contains("diverged"));
            assert!(resp.metrics.is_some());
        }
        other => panic!("expected an abort, got {other:?}"),
    }

    assert!(matches!(
        c.scenario().await,
        Err(ClientError::Server { status, .. }) if status.as_u16() == 404
    ));
}

#[tokio::test]
async fn live_session_through_the_client() {
    let mut cfg = point_mass(3600.0);
    cfg.operator = OperatorSource::Live;
    let server = start(any_port(), Mode::Live(cfg.clone())).await.unwrap();
    let c = Client::new(server.url());
    assert_eq!(c.scenario().await.unwrap(), cfg);

    let mut s = c.session("").await.unwrap();
    s.send_input(OperatorInput {
        t: 0.0,
        x_m: [0.0, 0.0, 0.015],
        k_h: 0.2,
        mode: TeleopMode::Offset,
    })
    .await
    .unwrap();
    s.send_raw("{\"type\":\"state_frame\"}\n").await.unwrap();
    let mut got_error = false;
    let mut reached = false;
    while !(got_error && reached) {
        match s.next().await.unwrap().unwrap() {
            Message::Error { .. } => got_error = true,
            Message::StateFrame(f) => reached |= f.x_d == [0.0, 0.0, 0.015],
            m => panic!("unexpected {m:?}"),
        }
    }
    s.close().await.unwrap();
}

#[test]
fn cli_run_then_metrics_agree() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("velcro.jsonl");
    let out = Command::new(TELEOP)
        .args(["run", "--scenario"])
        .arg(scenario("velcro.json"))
        .arg("--log")
        .arg(&log)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let run_out = String::from_utf8(out.stdout).unwrap();
    assert!(run_out.contains("bond_break_time   2.721 s"), "{run_out}");

    // the JSON-lines log reloads to exactly the in-process run
    let cfg = ScenarioConfig::from_file(scenario("velcro.json")).unwrap();
    let local = run_scenario(cfg).unwrap();
    assert_eq!(read_log(&log, LogFormat::Jsonl).unwrap(), local.rows);

    let out = Command::new(TELEOP)
        .args(["metrics", "--log"])
        .arg(&log)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let metrics_out = String::from_utf8(out.stdout).unwrap();
    let m = compute_metrics(&local.rows, &MetricsParams::default()).unwrap();
    assert!(metrics_out.contains(&format!("rows              {}", m.rows)));
    // the block printed by `metrics` also appears verbatim in the `run` output
    // (same tolerance: velcro's replica saturates at 0.05 m)
    assert!(
        run_out.contains(&metrics_out),
        "{run_out}\n---\n{metrics_out}"
    );
}

#[test]
fn cli_seed_and_delay_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.csv");
    let out = Command::new(TELEOP)
        .args(["run", "--scenario"])
        .arg(scenario("superimposition.json"))
        .args([
            "--delay", "0.05", "--seed", "17", "--format", "csv", "--log",
        ])
        .arg(&log)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seed              17"));
    let header = std::fs::read_to_string(&log).unwrap();
    assert!(header.starts_with("t,xd_x,"));
}

#[test]
fn cli_rejects_bad_input() {
    let out = Command::new(TELEOP)
        .args(["serve", "--port", "0", "--scenario"])
        .arg(scenario("velcro.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("live"));

    let out = Command::new(TELEOP)
        .args(["run", "--scenario", "/nonexistent.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = Command::new(TELEOP)
        .args(["run", "--format", "xml", "--scenario"])
        .arg(scenario("velcro.json"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[tokio::test]
async fn cli_replay_serves_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("velcro.csv");
    let cfg = ScenarioConfig::from_file(scenario("velcro.json")).unwrap();
    let local = run_scenario(cfg).unwrap();
    teleop_core::scenario::export_log(&local, &log, LogFormat::Csv).unwrap();

    let mut child = Command::new(TELEOP)
        .args(["replay", "--port", "0", "--log"])
        .arg(&log)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line
        .strip_prefix("listening on ")
        .and_then(|r| r.split_whitespace().next())
        .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
        .to_string();
    assert!(line.contains("(replay)"));

    let c = Client::new(url);
    let mut s = c.session("?speed=20").await.unwrap();
    let mut last_t = 0.0;
    let mut breaks = 0;
    while let Some(msg) = s.next().await.unwrap() {
        match msg {
            Message::StateFrame(f) => last_t = f.t,
            Message::Event(e) => {
                assert_eq!(e.kind, EventKind::BondBreak);
                breaks += 1;
            }
            m => panic!("unexpected {m:?}"),
        }
    }
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(last_t, 6.0);
    assert_eq!(breaks, 1);
}
