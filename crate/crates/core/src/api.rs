//! JSON bodies exchanged with the HTTP service.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelStats;
use crate::scenario::log::{read_csv, read_jsonl};
use crate::scenario::{
    compute_metrics, LogFormat, LogRow, LoggedEvent, Metrics, MetricsParams, RunLog, RunMeta,
    ScenarioConfig,
};

/// `POST /api/runs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    pub scenario: ScenarioConfig,
    /// Overrides the one-way link delay (s).
    #[serde(default)]
    pub delay: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Log encoding to return; no log body when absent.
    #[serde(default)]
    pub format: Option<LogFormat>,
}

impl RunRequest {
    /// Scenario with the request overrides applied.
    pub fn resolved(&self) -> ScenarioConfig {
        let mut cfg = self.scenario.clone();
        if let Some(d) = self.delay {
            cfg.link.delay = d;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg
    }
}

/// Reply to `POST /api/runs`. Also the body of a 422 when the run aborted,
/// in which case `aborted` carries the diagnostic and the log is partial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResponse {
    pub meta: RunMeta,
    /// Absent only when no row was produced.
    pub metrics: Option<Metrics>,
    pub events: Vec<LoggedEvent>,
    pub m2r: ChannelStats,
    pub r2m: ChannelStats,
    #[serde(default)]
    pub log: Option<String>,
    #[serde(default)]
    pub aborted: Option<String>,
}

impl RunResponse {
    pub fn from_log(log: &RunLog, format: Option<LogFormat>, aborted: Option<String>) -> Self {
        let params = MetricsParams { x_b: log.meta.x_b };
        RunResponse {
            meta: log.meta.clone(),
            metrics: compute_metrics(&log.rows, &params).ok(),
            events: log.events.clone(),
            m2r: log.m2r,
            r2m: log.r2m,
            log: format.map(|f| match f {
                LogFormat::Csv => log.to_csv_string(),
                LogFormat::Jsonl => log.to_jsonl_string(),
            }),
            aborted,
        }
    }
}

/// `POST /api/metrics`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRequest {
    /// Log file contents.
    pub log: String,
    pub format: LogFormat,
    /// Tracking tolerance; defaults to 0.05 m.
    #[serde(default)]
    pub x_b: Option<f64>,
}

impl MetricsRequest {
    pub fn rows(&self) -> Result<Vec<LogRow>, String> {
        match self.format {
            LogFormat::Csv => read_csv(self.log.as_bytes()),
            LogFormat::Jsonl => read_jsonl(self.log.as_bytes()),
        }
    }

    pub fn params(&self) -> MetricsParams {
        self.x_b
            .map(|x_b| MetricsParams { x_b })
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// `GET /health`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    /// `idle`, `live` or `replay`.
    pub mode: String,
}
