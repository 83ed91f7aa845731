//! Tag read/write/status wire protocol and client/server plumbing.
//!
//! Frames are a 4-byte big-endian payload length followed by a UTF-8 JSON
//! record. One request produces exactly one reply per connection, in order.
//! Correlation ids are caller-assigned and echoed in replies.

mod client;
mod frame;
mod message;
mod server;

pub use client::Client;
pub use frame::{decode_frame, encode_frame, read_frame, FrameError, MAX_FRAME_BYTES};
pub use message::{Message, MessageKind};
pub use server::{serve, Handler, ServerHandle};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Tag payload value. Integers are tried before floats on decode so that
/// both round-trip through JSON unambiguously (floats always serialize
/// with a decimal point or exponent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            Value::Text(_) => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            Value::Int(v) => Some(*v != 0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Quality {
    Good,
    Stale,
    /// Only ever set by attack paths.
    Forced,
}

/// A named, timestamped process variable; the universal currency of the
/// testbed. Timestamps are producer-assigned milliseconds since the
/// scenario epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagValue {
    pub name: String,
    pub value: Value,
    pub timestamp_ms: u64,
    pub quality: Quality,
}

impl TagValue {
    pub fn float(name: &str, value: f64, timestamp_ms: u64) -> Self {
        TagValue {
            name: name.to_string(),
            value: Value::Float(value),
            timestamp_ms,
            quality: Quality::Good,
        }
    }

    pub fn boolean(name: &str, value: bool, timestamp_ms: u64) -> Self {
        TagValue {
            name: name.to_string(),
            value: Value::Bool(value),
            timestamp_ms,
            quality: Quality::Good,
        }
    }

    pub fn text(name: &str, value: &str, timestamp_ms: u64) -> Self {
        TagValue {
            name: name.to_string(),
            value: Value::Text(value.to_string()),
            timestamp_ms,
            quality: Quality::Good,
        }
    }

    pub fn forced(mut self) -> Self {
        self.quality = Quality::Forced;
        self
    }
}

#[derive(Debug, Error)]
pub enum BusError {
    #[error("transport error: {0}")]
    Transport(#[from] std::io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("remote error: {0}")]
    Remote(String),
    #[error("correlation id mismatch: sent {sent}, got {got}")]
    Correlation { sent: u64, got: u64 },
    #[error("unexpected reply kind")]
    UnexpectedReply,
}

/// Read access to a tag address space, implemented both by the network
/// client and by in-process components for deterministic harness runs.
pub trait TagRead {
    fn read_tags(&mut self, tags: &[String]) -> Result<BTreeMap<String, TagValue>, BusError>;
}

/// Write access to a tag address space.
pub trait TagWrite {
    fn write_tag(&mut self, tag: TagValue) -> Result<(), BusError>;
}
