use super::TagValue;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One protocol record. `id` is the caller-assigned correlation id; replies
/// echo the id of the request they answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub id: u64,
    #[serde(flatten)]
    pub kind: MessageKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Read {
        tags: Vec<String>,
    },
    Write {
        writes: BTreeMap<String, TagValue>,
    },
    Status,
    /// Placeholder per the polling-only architecture; accepted but unused.
    SubscribePoll {
        tags: Vec<String>,
        period_ms: u64,
    },
    Reply {
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        tags: BTreeMap<String, TagValue>,
    },
}

impl Message {
    pub fn read(id: u64, tags: Vec<String>) -> Self {
        Message {
            id,
            kind: MessageKind::Read { tags },
        }
    }

    pub fn write(id: u64, writes: BTreeMap<String, TagValue>) -> Self {
        Message {
            id,
            kind: MessageKind::Write { writes },
        }
    }

    pub fn status(id: u64) -> Self {
        Message {
            id,
            kind: MessageKind::Status,
        }
    }

    pub fn reply_ok(id: u64, tags: BTreeMap<String, TagValue>) -> Self {
        Message {
            id,
            kind: MessageKind::Reply {
                ok: true,
                error: None,
                tags,
            },
        }
    }

    pub fn reply_err(id: u64, error: &str) -> Self {
        Message {
            id,
            kind: MessageKind::Reply {
                ok: false,
                error: Some(error.to_string()),
                tags: BTreeMap::new(),
            },
        }
    }
}
