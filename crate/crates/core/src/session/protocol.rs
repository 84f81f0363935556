//! Wire protocol between a session and operator consoles.
//!
//! Every message is a 4-byte big-endian length followed by that many bytes
//! of UTF-8 JSON. The JSON object carries its kind in a `type` field and the
//! protocol version in `schema_version`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::RunMetrics;
use super::state::{Button, Edge, Phase};
use crate::monitor::RegionId;
use crate::zones::FenceMesh;

pub const SCHEMA_VERSION: u32 = 1;

/// Frames longer than this are rejected before allocation.
pub const MAX_FRAME_LEN: usize = 16 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Operator,
    Observer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ButtonStates {
    pub enable_held: bool,
    pub go_enabled: bool,
    pub confirm_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingOutline {
    pub id: RegionId,
    /// Convex outline in workspace-image pixels.
    pub outline: Vec<[f64; 2]>,
}

/// Everything a console needs to draw one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    pub frame_index: u64,
    pub time: f64,
    pub phase: Phase,
    pub current_task: u8,
    pub status_text: String,
    pub buttons: ButtonStates,
    /// Outer edge of the robot and danger zones in image pixels.
    pub danger_boundary: Vec<[f64; 2]>,
    pub robot_outline: Vec<[f64; 2]>,
    pub pending: Vec<PendingOutline>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fence: Option<FenceMesh>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        role: Role,
        #[serde(default)]
        client: String,
    },
    Snapshot(Snapshot),
    Button {
        button: Button,
        edge: Edge,
    },
    ConfirmAck {
        confirmed: Vec<RegionId>,
    },
    Metrics(RunMetrics),
    Error {
        message: String,
    },
}

const KNOWN_TYPES: [&str; 6] = ["hello", "snapshot", "button", "confirm_ack", "metrics", "error"];

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("frame of {0} bytes exceeds the limit")]
    TooLong(usize),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ProtocolError {
    /// Whether the connection can carry on after replying with an error.
    pub fn is_recoverable(&self) -> bool {
        matches!(self, ProtocolError::UnknownType(_) | ProtocolError::Malformed(_))
    }
}

impl Message {
    pub fn error(message: impl Into<String>) -> Self {
        Message::Error {
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("messages serialize");
        if let serde_json::Value::Object(fields) = &mut value {
            fields.entry("schema_version").or_insert(SCHEMA_VERSION.into());
        }
        value.to_string()
    }

    /// Parses one JSON payload.
    pub fn from_json(text: &str) -> Result<Self, ProtocolError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        let kind = value
            .get("type")
            .and_then(|t| t.as_str())
            .ok_or_else(|| ProtocolError::Malformed("missing type".into()))?;
        if !KNOWN_TYPES.contains(&kind) {
            return Err(ProtocolError::UnknownType(kind.to_string()));
        }
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(ProtocolError::Malformed(format!("unsupported schema_version {v}"))),
            None => return Err(ProtocolError::Malformed("missing schema_version".into())),
        }
        serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))
    }

    /// Length-prefixed frame.
    pub fn encode(&self) -> Vec<u8> {
        let body = self.to_json().into_bytes();
        let mut out = Vec::with_capacity(4 + body.len());
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }
}

pub fn frame_len(prefix: [u8; 4]) -> Result<usize, ProtocolError> {
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME_LEN {
        return Err(ProtocolError::TooLong(len));
    }
    Ok(len)
}

pub fn decode_payload(payload: &[u8]) -> Result<Message, ProtocolError> {
    let text = std::str::from_utf8(payload).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    Message::from_json(text)
}

pub fn write_message<W: Write>(out: &mut W, msg: &Message) -> Result<(), ProtocolError> {
    out.write_all(&msg.encode())?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_message<R: Read>(input: &mut R) -> Result<Option<Message>, ProtocolError> {
    let mut prefix = [0u8; 4];
    match input.read_exact(&mut prefix) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let mut payload = vec![0u8; frame_len(prefix)?];
    input.read_exact(&mut payload)?;
    decode_payload(&payload).map(Some)
}
