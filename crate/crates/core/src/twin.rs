//! Digital-twin state mirror: polls the historian per a CSV manifest and
//! exposes current plant state, plus the component status/color encoding
//! the 3D layer would render.

use crate::historian::Sample;
use crate::manifest::SensorManifestEntry;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TwinError {
    #[error("unknown tag {0}")]
    UnknownTag(String),
    #[error("no encoding kind configured for tag {0}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MirrorStatus {
    Fresh,
    Stale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorVar {
    pub tag: String,
    pub value: f64,
    pub age_ms: u64,
    pub status: MirrorStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentKind {
    PumpOrValve,
    Thermal { t_min: f64, t_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatusEncoding {
    RedRunningOpen,
    GreenSecuredShut,
    /// Blue-to-red gradient position, clamped to [0, 1].
    Gradient(f64),
}

/// Staleness threshold as a multiple of the poll period.
const STALE_PERIODS: u64 = 4;

pub struct TwinMirror {
    vars: BTreeMap<String, MirrorVar>,
    /// Producer timestamp last seen per tag; age resets when it changes.
    last_producer_ts: BTreeMap<String, u64>,
    kinds: BTreeMap<String, ComponentKind>,
    pub poll_period_ms: u64,
    now_ms: u64,
}

impl TwinMirror {
    pub fn new(manifest: &[SensorManifestEntry], poll_period_ms: u64) -> Self {
        let vars = manifest
            .iter()
            .map(|e| {
                (
                    e.tag.clone(),
                    MirrorVar {
                        tag: e.tag.clone(),
                        value: 0.0,
                        age_ms: u64::MAX,
                        status: MirrorStatus::Stale,
                    },
                )
            })
            .collect();
        TwinMirror {
            vars,
            last_producer_ts: BTreeMap::new(),
            kinds: BTreeMap::new(),
            poll_period_ms,
            now_ms: 0,
        }
    }

    pub fn set_kind(&mut self, tag: &str, kind: ComponentKind) {
        self.kinds.insert(tag.to_string(), kind);
    }

    pub fn watched_tags(&self) -> Vec<String> {
        self.vars.keys().cloned().collect()
    }

    /// One poll pass: refresh each watched var from the historian's latest
    /// sample. `latest` returns `None` when the historian is unreachable or
    /// has no data; the var then ages into STALE.
    pub fn poll_update<F>(&mut self, now_ms: u64, mut latest: F)
    where
        F: FnMut(&str) -> Option<Sample>,
    {
        self.now_ms = now_ms;
        let threshold = STALE_PERIODS * self.poll_period_ms;
        for (tag, var) in self.vars.iter_mut() {
            if let Some(sample) = latest(tag) {
                var.value = sample.value;
                let changed = self.last_producer_ts.get(tag) != Some(&sample.t_ms);
                if changed {
                    self.last_producer_ts.insert(tag.clone(), sample.t_ms);
                    var.age_ms = 0;
                } else {
                    var.age_ms = var.age_ms.saturating_add(self.poll_period_ms);
                }
            } else {
                var.age_ms = var.age_ms.saturating_add(self.poll_period_ms);
            }
            var.status = if var.age_ms > threshold {
                MirrorStatus::Stale
            } else {
                MirrorStatus::Fresh
            };
        }
    }

    pub fn get(&self, tag: &str) -> Result<&MirrorVar, TwinError> {
        self.vars
            .get(tag)
            .ok_or_else(|| TwinError::UnknownTag(tag.to_string()))
    }

    /// Maps a mirrored variable to the status color contract: boolean tags
    /// to the red/green running-secured pair, thermal tags to a gradient
    /// scalar over their configured range.
    pub fn status_encoding(&self, tag: &str) -> Result<StatusEncoding, TwinError> {
        let var = self.get(tag)?;
        let kind = self
            .kinds
            .get(tag)
            .ok_or_else(|| TwinError::UnknownKind(tag.to_string()))?;
        Ok(match kind {
            ComponentKind::PumpOrValve => {
                if var.value != 0.0 {
                    StatusEncoding::RedRunningOpen
                } else {
                    StatusEncoding::GreenSecuredShut
                }
            }
            ComponentKind::Thermal { t_min, t_max } => {
                StatusEncoding::Gradient(((var.value - t_min) / (t_max - t_min)).clamp(0.0, 1.0))
            }
        })
    }
}
