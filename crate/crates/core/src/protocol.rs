//! Live-session wire protocol: one JSON object per line.
//!
//! Unknown fields are ignored; unknown `type` values are rejected and the
//! peer answers with an [`Message::Error`] frame.

use serde::{Deserialize, Serialize};

use crate::teleop::TeleopMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorInput {
    pub t: f64,
    pub x_m: [f64; 3],
    pub k_h: f64,
    #[serde(default)]
    pub mode: TeleopMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub t: f64,
    pub x_r: [f64; 3],
    pub x_d: [f64; 3],
    pub f_r: [f64; 3],
    pub f_master: [f64; 3],
    pub bond: bool,
    pub delay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Disconnect,
    Reconnect,
    BondBreak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    OperatorInput(OperatorInput),
    StateFrame(StateFrame),
    Event(Event),
    Error { message: String },
}

impl Message {
    pub fn error(message: impl Into<String>) -> Self {
        Message::Error {
            message: message.into(),
        }
    }

    /// Serializes to a single line terminated by `\n`.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("protocol messages serialize");
        s.push('\n');
        s
    }

    pub fn parse_line(line: &str) -> Result<Message, serde_json::Error> {
        serde_json::from_str(line.trim_end())
    }
}

/// Splits a chunk of newline-delimited JSON into messages, skipping blank
/// lines.
pub fn parse_lines(chunk: &str) -> Vec<Result<Message, serde_json::Error>> {
    chunk
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(Message::parse_line)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_input_wire_format() {
        let line = r#"{"type":"operator_input","t":1.5,"x_m":[0.01,0,0],"k_h":0.5,"mode":"velocity","extra":42}"#;
        let msg = Message::parse_line(line).unwrap();
        assert_eq!(
            msg,
            Message::OperatorInput(OperatorInput {
                t: 1.5,
                x_m: [0.01, 0.0, 0.0],
                k_h: 0.5,
                mode: TeleopMode::Velocity,
            })
        );
    }

    #[test]
    fn state_frame_keys() {
        let frame = Message::StateFrame(StateFrame {
            t: 0.5,
            x_r: [0.0; 3],
            x_d: [0.1, 0.0, 0.0],
            f_r: [0.0; 3],
            f_master: [0.0; 3],
            bond: true,
            delay: 0.2,
        });
        let line = frame.to_line();
        assert!(line.ends_with('\n'));
        assert_eq!(line.matches('\n').count(), 1);
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["type"], "state_frame");
        for key in ["t", "x_r", "x_d", "f_r", "f_master", "bond", "delay"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn event_wire_format() {
        let line = Message::Event(Event {
            kind: EventKind::BondBreak,
            t: 3.0,
        })
        .to_line();
        assert_eq!(
            line,
            "{\"type\":\"event\",\"kind\":\"bond_break\",\"t\":3.0}\n"
        );
    }

    #[test]
    fn unknown_type_is_rejected() {
        assert!(Message::parse_line(r#"{"type":"teleport","t":0}"#).is_err());
    }

    #[test]
    fn chunk_with_several_lines() {
        let chunk = "{\"type\":\"event\",\"kind\":\"disconnect\",\"t\":1}\n\n{\"type\":\"nope\"}\n";
        let parsed = parse_lines(chunk);
        assert_eq!(parsed.len(), 2);
        assert!(parsed[0].is_ok());
        assert!(parsed[1].is_err());
    }
}
