//! Sensor manifest: the CSV watch list shared by the historian poller and
//! the twin mirror. Columns are fixed as `tag,source,period_ms` with a
//! header row.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TagSource {
    Plc,
    Plant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorManifestEntry {
    pub tag: String,
    pub source: TagSource,
    pub period_ms: u64,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error reading manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate tag {tag}")]
    DuplicateTag { line: usize, tag: String },
}

pub fn parse_manifest(text: &str) -> Result<Vec<SensorManifestEntry>, ManifestError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "tag,source,period_ms" => {}
        Some((_, header)) => {
            return Err(ManifestError::Malformed {
                line: 1,
                reason: format!("bad header {header:?}, expected tag,source,period_ms"),
            })
        }
        None => {
            return Err(ManifestError::Malformed {
                line: 1,
                reason: "empty manifest".to_string(),
            })
        }
    }

    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(ManifestError::Malformed {
                line: line_no,
                reason: format!("expected 3 columns, got {}", fields.len()),
            });
        }
        let tag = fields[0].to_string();
        if tag.is_empty() {
            return Err(ManifestError::Malformed {
                line: line_no,
                reason: "empty tag".to_string(),
            });
        }
        if !seen.insert(tag.clone()) {
            return Err(ManifestError::DuplicateTag { line: line_no, tag });
        }
        let source = match fields[1] {
            "PLC" => TagSource::Plc,
            "PLANT" => TagSource::Plant,
            other => {
                return Err(ManifestError::Malformed {
                    line: line_no,
                    reason: format!("unknown source {other:?}"),
                })
            }
        };
        let period_ms: u64 = fields[2].parse().map_err(|_| ManifestError::Malformed {
            line: line_no,
            reason: format!("bad period_ms {:?}", fields[2]),
        })?;
        if period_ms < 10 {
            return Err(ManifestError::Malformed {
                line: line_no,
                reason: format!("period_ms {period_ms} below minimum 10"),
            });
        }
        entries.push(SensorManifestEntry {
            tag,
            source,
            period_ms,
        });
    }
    Ok(entries)
}

pub fn load_manifest(path: &Path) -> Result<Vec<SensorManifestEntry>, ManifestError> {
    parse_manifest(&std::fs::read_to_string(path)?)
}
