//! Thin client for the teleoperation service: typed HTTP calls plus a
//! WebSocket session speaking the newline-delimited JSON protocol.

use std::collections::VecDeque;

use futures_util::{SinkExt, StreamExt};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message as WsMessage;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use teleop_core::api::{ErrorBody, Health, MetricsRequest, RunRequest, RunResponse};
use teleop_core::protocol::{parse_lines, Message, OperatorInput};
use teleop_core::scenario::{Metrics, ScenarioConfig};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),

    #[error("server answered {status}: {message}")]
    Server { status: StatusCode, message: String },

    /// The run stopped early; the response holds the partial log.
    #[error("{}", .0.aborted.as_deref().unwrap_or("run aborted"))]
    Aborted(Box<RunResponse>),

    #[error("websocket: {0}")]
    WebSocket(#[from] tokio_tungstenite::tungstenite::Error),

    #[error("bad message from server: {0}")]
    Protocol(String),
}

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, for example `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub async fn health(&self) -> Result<Health> {
        let r = self
            .http
            .get(format!("{}/health", self.base))
            .send()
            .await?;
        decode(r).await
    }

    /// The scenario of the live session being served.
    pub async fn scenario(&self) -> Result<ScenarioConfig> {
        let r = self
            .http
            .get(format!("{}/api/scenario", self.base))
            .send()
            .await?;
        decode(r).await
    }

    pub async fn run(&self, req: &RunRequest) -> Result<RunResponse> {
        let r = self
            .http
            .post(format!("{}/api/runs", self.base))
            .json(req)
            .send()
            .await?;
        if r.status() == StatusCode::UNPROCESSABLE_ENTITY {
            return Err(ClientError::Aborted(Box::new(r.json().await?)));
        }
        decode(r).await
    }

    pub async fn metrics(&self, req: &MetricsRequest) -> Result<Metrics> {
        let r = self
            .http
            .post(format!("{}/api/metrics", self.base))
            .json(req)
            .send()
            .await?;
        decode(r).await
    }

    /// Opens `/session`. `query` is appended verbatim (for example
    /// `?speed=2`).
    pub async fn session(&self, query: &str) -> Result<Session> {
        let ws_base = self
            .base
            .replacen("http://", "ws://", 1)
            .replacen("https://", "wss://", 1);
        let (ws, _) = connect_async(format!("{ws_base}/session{query}")).await?;
        Ok(Session {
            ws,
            pending: VecDeque::new(),
        })
    }
}

async fn decode<T: DeserializeOwned>(r: reqwest::Response) -> Result<T> {
    let status = r.status();
    if status.is_success() {
        return Ok(r.json().await?);
    }
    let text = r.text().await?;
    let message = serde_json::from_str::<ErrorBody>(&text)
        .map(|b| b.error)
        .unwrap_or(text);
    Err(ClientError::Server { status, message })
}

/// An open `/session` WebSocket.
#[derive(Debug)]
pub struct Session {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    pending: VecDeque<Message>,
}

impl Session {
    pub async fn send_input(&mut self, input: OperatorInput) -> Result<()> {
        self.send(&Message::OperatorInput(input)).await
    }

    pub async fn send(&mut self, msg: &Message) -> Result<()> {
        self.send_raw(&msg.to_line()).await
    }

    /// Sends text as is; useful for exercising the server's error path.
    pub async fn send_raw(&mut self, text: &str) -> Result<()> {
        self.ws.send(WsMessage::Text(text.into())).await?;
        Ok(())
    }

    /// Next message, or `None` once the server has closed the session.
    /// A text frame holding several lines yields them one per call.
    pub async fn next(&mut self) -> Result<Option<Message>> {
        loop {
            if let Some(m) = self.pending.pop_front() {
                return Ok(Some(m));
            }
            let Some(frame) = self.ws.next().await else {
                return Ok(None);
            };
            match frame? {
                WsMessage::Text(t) => {
                    for parsed in parse_lines(&t) {
                        let m = parsed.map_err(|e| ClientError::Protocol(e.to_string()))?;
                        self.pending.push_back(m);
                    }
                }
                WsMessage::Close(_) => return Ok(None),
                _ => {}
            }
        }
    }

    pub async fn close(mut self) -> Result<()> {
        self.ws.close(None).await?;
        Ok(())
    }
}
