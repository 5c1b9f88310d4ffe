//! Control messages, as JSON text frames.

use kinon::analysis::MetricsRecord;
use kinon::engine::InitialSpec;
use kinon::MapSpec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Asks for a fresh hello.
    Hello,
    SetMap { map: MapSpec },
    Transport { command: Transport },
    Seed { initial: InitialSpec },
    /// `0` runs as fast as possible.
    SetSpeed { steps_per_second: f64 },
    Subscribe { decimation: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    Pause,
    Resume,
    Step,
    Reset,
}

impl Transport {
    pub fn name(self) -> &'static str {
        match self {
            Transport::Pause => "pause",
            Transport::Resume => "resume",
            Transport::Step => "step",
            Transport::Reset => "reset",
        }
    }
}

impl ClientMessage {
    /// Short name used in acks.
    pub fn name(&self) -> &'static str {
        match self {
            ClientMessage::Hello => "hello",
            ClientMessage::SetMap { .. } => "set_map",
            ClientMessage::Transport { command } => command.name(),
            ClientMessage::Seed { .. } => "seed",
            ClientMessage::SetSpeed { .. } => "set_speed",
            ClientMessage::Subscribe { .. } => "subscribe",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub width: u32,
    pub height: u32,
    pub node_count: usize,
    pub step: u64,
    pub map: MapSpec,
    pub paused: bool,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(Hello),
    /// `effective_step` is the step boundary the command was applied at,
    /// `step` the current step afterwards.
    Ack { command: String, effective_step: u64, step: u64 },
    Error { message: String },
    Metrics(MetricsRecord),
}

#[derive(Debug, thiserror::Error)]
#[error("bad message: {0}")]
pub struct ProtocolError(String);

/// Parses one JSON control message. Maps and seeds are only checked for shape
/// here; the simulation validates them before use.
pub fn parse_client(text: &str) -> Result<ClientMessage, ProtocolError> {
    serde_json::from_str(text).map_err(|e| ProtocolError(e.to_string()))
}

pub fn parse_server(text: &str) -> Result<ServerMessage, ProtocolError> {
    serde_json::from_str(text).map_err(|e| ProtocolError(e.to_string()))
}

pub fn to_json<T: Serialize>(message: &T) -> String {
    serde_json::to_string(message).expect("protocol messages always serialize")
}
