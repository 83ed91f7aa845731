//! Attack injection: false-data-injection routes, an in-process
//! man-in-the-middle interposer on the PLC-to-historian link, a TCP
//! frame-level proxy for networked runs, and a scenario runner that
//! schedules events against the testbed and emits ground-truth labels.

mod link;
mod proxy;
mod scenario;

pub use link::LinkInterposer;
pub use proxy::{start_proxy, ProxyHandle};
pub use scenario::{
    run_scenario, EventAction, EventOutcome, LabelKind, LabeledInterval, RunLog, RunLogEntry,
    ScenarioEvent, ScenarioScript,
};

use crate::tagbus::Value;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("attack failed: {0}")]
    AttackFailed(String),
    #[error("scenario parse error: {0}")]
    Scenario(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Frame transform applied by the MITM interposer or TCP proxy.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Replace the tag's value outright.
    SetValue(f64),
    /// Multiply a numeric value.
    Scale(f64),
    /// Hold matching frames for this long before delivery.
    DelayMs(u64),
    /// Drop matching frames with this probability (seeded).
    DropProb(f64),
}

/// One rewrite rule. `tag` is an exact tag name or `"*"` for all tags;
/// delay/drop apply at frame granularity regardless of tag.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MitmRule {
    pub tag: String,
    pub transform: Transform,
}

impl MitmRule {
    pub fn matches(&self, tag: &str) -> bool {
        self.tag == "*" || self.tag == tag
    }

    /// Applies a value-level transform; delay/drop are handled by the
    /// frame pipeline, not here.
    pub fn apply_value(&self, value: &Value) -> Value {
        match (&self.transform, value) {
            (Transform::SetValue(v), _) => Value::Float(*v),
            (Transform::Scale(k), Value::Float(f)) => Value::Float(f * k),
            (Transform::Scale(k), Value::Int(i)) => Value::Float(*i as f64 * k),
            _ => value.clone(),
        }
    }
}

/// Delivery route for a false-data-injection write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FdiRoute {
    /// Forced override at the plant read path; physics untouched.
    PlantOverride,
    /// Forced override of a PLC input tag.
    PlcWrite,
    /// Rewrite rule on an active MITM link.
    MitmRewrite,
}
