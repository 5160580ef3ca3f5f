//! HTTP/JSON and WebSocket service around the teleoperation workbench.
//!
//! Routes:
//!
//! * `GET /health`
//! * `GET /api/scenario` - the live scenario, 404 otherwise
//! * `POST /api/runs` - batch run of a scripted scenario
//! * `POST /api/metrics` - metrics of a log body
//! * `GET /session` - WebSocket carrying newline-delimited JSON protocol
//!   messages. Live mode runs a paced simulation; replay mode streams a log
//!   (`?speed=` scales the pace).

mod live;
mod replay;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{self, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde::Deserialize;
use tokio::sync::{broadcast, oneshot};
use tokio::task::JoinHandle;

use teleop_core::api::{ErrorBody, Health, MetricsRequest, RunRequest, RunResponse};
use teleop_core::protocol::{parse_lines, Message};
use teleop_core::scenario::{compute_metrics, run_scenario, LogRow, ScenarioConfig};

pub use live::LiveSession;

/// Largest accepted request body. Logs of long runs are big.
const BODY_LIMIT: usize = 256 * 1024 * 1024;

/// What `/session` serves.
// built once per server, so the config is not worth boxing
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum Mode {
    /// HTTP endpoints only.
    Idle,
    /// A live session driven by connected operators.
    Live(ScenarioConfig),
    /// Playback of recorded rows.
    Replay(Vec<LogRow>),
}

#[derive(Debug)]
enum Served {
    Idle,
    Live(Box<LiveSession>),
    Replay(Arc<Vec<LogRow>>),
}

#[derive(Debug, Clone)]
pub struct AppState(Arc<Served>);

impl AppState {
    /// Must be called inside a tokio runtime when `mode` is live.
    pub fn new(mode: Mode) -> teleop_core::Result<Self> {
        let served = match mode {
            Mode::Idle => Served::Idle,
            Mode::Live(cfg) => {
                if !cfg.is_live() {
                    return Err(teleop_core::Error::Config(
                        "a live session needs `operator: live`".into(),
                    ));
                }
                Served::Live(Box::new(LiveSession::start(cfg)?))
            }
            Mode::Replay(rows) => Served::Replay(Arc::new(rows)),
        };
        Ok(AppState(Arc::new(served)))
    }

    fn mode_name(&self) -> &'static str {
        match *self.0 {
            Served::Idle => "idle",
            Served::Live(_) => "live",
            Served::Replay(_) => "replay",
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/api/scenario", get(scenario))
        .route("/api/runs", post(runs))
        .route("/api/metrics", post(metrics))
        .route("/session", get(session))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// A server running on a background task.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for the server task.
    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.join().await
    }

    /// Waits until the server stops on its own (it normally does not).
    pub async fn join(self) -> std::io::Result<()> {
        match self.task.await {
            Ok(r) => r,
            Err(e) => Err(std::io::Error::other(e)),
        }
    }
}

/// Binds `addr` (port 0 picks a free one) and serves in the background.
pub async fn start(addr: SocketAddr, mode: Mode) -> std::io::Result<ServerHandle> {
    let state = AppState::new(mode)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(state);
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    tracing::info!(%addr, "listening");
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        task,
    })
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: message.into(),
        }),
    )
        .into_response()
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        mode: state.mode_name().into(),
    })
}

async fn scenario(State(state): State<AppState>) -> Response {
    match &*state.0 {
        Served::Live(s) => Json(s.scenario().clone()).into_response(),
        _ => error(StatusCode::NOT_FOUND, "no live scenario"),
    }
}

async fn runs(body: Result<Json<RunRequest>, JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let cfg = req.resolved();
    if let Err(e) = cfg.validate() {
        return error(StatusCode::BAD_REQUEST, e.to_string());
    }
    if cfg.is_live() {
        return error(
            StatusCode::BAD_REQUEST,
            "live scenarios run through `serve`, not as a batch",
        );
    }
    let format = req.format;
    let result = tokio::task::spawn_blocking(move || match run_scenario(cfg) {
        Ok(log) => (StatusCode::OK, RunResponse::from_log(&log, format, None)),
        Err(a) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            RunResponse::from_log(&a.partial, format, Some(a.to_string())),
        ),
    })
    .await;
    match result {
        Ok((status, resp)) => (status, Json(resp)).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn metrics(body: Result<Json<MetricsRequest>, JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let result = tokio::task::spawn_blocking(move || {
        let rows = req.rows()?;
        compute_metrics(&rows, &req.params()).map_err(|e| e.to_string())
    })
    .await;
    match result {
        Ok(Ok(m)) => Json(m).into_response(),
        Ok(Err(e)) => error(StatusCode::BAD_REQUEST, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    speed: Option<f64>,
}

async fn session(
    State(state): State<AppState>,
    Query(q): Query<SessionQuery>,
    upgrade: WebSocketUpgrade,
) -> Response {
    match &*state.0 {
        Served::Idle => error(StatusCode::NOT_FOUND, "no session is being served"),
        Served::Live(_) => upgrade.on_upgrade(move |ws| live_socket(ws, state)),
        Served::Replay(rows) => {
            let speed = q.speed.unwrap_or(1.0);
            if !(speed.is_finite() && speed > 0.0) {
                return error(StatusCode::BAD_REQUEST, "speed must be > 0");
            }
            let items = replay::schedule(rows, speed);
            upgrade.on_upgrade(move |ws| replay_socket(ws, items))
        }
    }
}

fn text(msg: &Message) -> ws::Message {
    ws::Message::Text(msg.to_line().into())
}

async fn live_socket(socket: WebSocket, state: AppState) {
    let Served::Live(session) = &*state.0 else {
        return;
    };
    let mut frames = session.subscribe();
    session.send(live::SessionInput::ClientJoined);
    let (mut tx, mut rx) = socket.split();
    loop {
        tokio::select! {
            incoming = rx.next() => {
                let chunk = match incoming {
                    Some(Ok(ws::Message::Text(t))) => t.to_string(),
                    Some(Ok(ws::Message::Binary(b))) => match String::from_utf8(b.to_vec()) {
                        Ok(s) => s,
                        Err(_) => {
                            if tx.send(text(&Message::error("binary frames must be UTF-8 JSON"))).await.is_err() {
                                break;
                            }
                            continue;
                        }
                    },
                    Some(Ok(ws::Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                for parsed in parse_lines(&chunk) {
                    let reply = match parsed {
                        Ok(Message::OperatorInput(i)) => {
                            if i.x_m.iter().chain([&i.k_h, &i.t]).all(|v| v.is_finite()) {
                                session.send(live::SessionInput::Operator(i));
                                None
                            } else {
                                Some(Message::error("operator_input must be finite"))
                            }
                        }
                        Ok(_) => Some(Message::error("clients may only send operator_input")),
                        Err(e) => Some(Message::error(format!("bad message: {e}"))),
                    };
                    if let Some(reply) = reply {
                        if tx.send(text(&reply)).await.is_err() {
                            break;
                        }
                    }
                }
            }
            out = frames.recv() => match out {
                Ok(msg) => {
                    if tx.send(text(&msg)).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::debug!(skipped = n, "slow client skipped frames");
                }
                Err(broadcast::error::RecvError::Closed) => {
                    let _ = tx.send(ws::Message::Close(None)).await;
                    break;
                }
            }
        }
    }
    session.send(live::SessionInput::ClientLeft);
}

async fn replay_socket(socket: WebSocket, items: Vec<replay::Scheduled>) {
    let (mut tx, mut rx) = socket.split();
    // drain incoming frames so pings and closes are handled
    let reader = tokio::spawn(async move { while let Some(Ok(_)) = rx.next().await {} });
    let start = tokio::time::Instant::now();
    let mut open = true;
    for item in items {
        tokio::time::sleep_until(start + item.at).await;
        if tx.send(text(&item.message)).await.is_err() {
            open = false;
            break;
        }
    }
    if open {
        let _ = tx.send(ws::Message::Close(None)).await;
    }
    reader.abort();
}
