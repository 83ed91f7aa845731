use super::{AttackError, FdiRoute, MitmRule, Transform};
use crate::harness::Testbed;
use crate::plant::Malfunction;
use crate::plc::{ImplantTarget, LogicImplant, SimStatus};
use crate::tagbus::Value;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// A scripted run: events fire at fixed offsets from the scenario epoch,
/// so a given script and seed always reproduce the same trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub name: String,
    #[serde(default)]
    pub epoch_ms: u64,
    pub duration_ms: u64,
    #[serde(default)]
    pub seed: u64,
    pub events: Vec<ScenarioEvent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub action: EventAction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "action", content = "params", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventAction {
    FdiWrite {
        tag: String,
        value: f64,
        route: FdiRoute,
    },
    FdiClear {
        tag: String,
        route: FdiRoute,
    },
    ImplantOn {
        amplitude_frac: f64,
        freq_hz: f64,
        target: ImplantTarget,
    },
    ImplantOff,
    MitmStart {
        rules: Vec<MitmRule>,
    },
    MitmStop,
    DosStart {
        drop_prob: f64,
        delay_ms: u64,
    },
    DosStop,
    ReplayRecord {
        window_ms: u64,
    },
    ReplayPlay,
    SteamStep {
        frac: f64,
    },
    PumpTrip,
    SimStatus {
        status: String,
    },
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self, AttackError> {
        let script: ScenarioScript =
            serde_json::from_str(text).map_err(|e| AttackError::Scenario(e.to_string()))?;
        if script.duration_ms == 0 {
            return Err(AttackError::Scenario("duration_ms must be > 0".to_string()));
        }
        for ev in &script.events {
            if ev.t_ms >= script.duration_ms {
                return Err(AttackError::Scenario(format!(
                    "event at t={} ms is outside the {} ms run",
                    ev.t_ms, script.duration_ms
                )));
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, AttackError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventOutcome {
    Applied,
    Failed(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub t_ms: u64,
    pub action: String,
    pub outcome: EventOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelKind {
    Fdi,
    Implant,
    Mitm,
    Dos,
    Replay,
}

impl LabelKind {
    fn as_str(self) -> &'static str {
        match self {
            LabelKind::Fdi => "FDI",
            LabelKind::Implant => "IMPLANT",
            LabelKind::Mitm => "MITM",
            LabelKind::Dos => "DOS",
            LabelKind::Replay => "REPLAY",
        }
    }
}

/// Ground-truth attack-active interval, half-open `[start_ms, end_ms)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInterval {
    pub kind: LabelKind,
    pub tag: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub scenario: String,
    pub duration_ms: u64,
    pub entries: Vec<RunLogEntry>,
    pub labels: Vec<LabeledInterval>,
}

impl RunLog {
    /// `kind,tag,start_ms,end_ms` ground-truth export for detector scoring.
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("kind,tag,start_ms,end_ms\n");
        for l in &self.labels {
            let _ = writeln!(out, "{},{},{},{}", l.kind.as_str(), l.tag, l.start_ms, l.end_ms);
        }
        out
    }
}

fn action_name(a: &EventAction) -> String {
    match a {
        EventAction::FdiWrite { tag, .. } => format!("FDI_WRITE {tag}"),
        EventAction::FdiClear { tag, .. } => format!("FDI_CLEAR {tag}"),
        EventAction::ImplantOn { .. } => "IMPLANT_ON".to_string(),
        EventAction::ImplantOff => "IMPLANT_OFF".to_string(),
        EventAction::MitmStart { .. } => "MITM_START".to_string(),
        EventAction::MitmStop => "MITM_STOP".to_string(),
        EventAction::DosStart { .. } => "DOS_START".to_string(),
        EventAction::DosStop => "DOS_STOP".to_string(),
        EventAction::ReplayRecord { .. } => "REPLAY_RECORD".to_string(),
        EventAction::ReplayPlay => "REPLAY_PLAY".to_string(),
        EventAction::SteamStep { .. } => "STEAM_STEP".to_string(),
        EventAction::PumpTrip => "PUMP_TRIP".to_string(),
        EventAction::SimStatus { .. } => "SIM_STATUS".to_string(),
    }
}

struct OpenLabel {
    kind: LabelKind,
    tag: String,
    start_ms: u64,
}

/// Drives the testbed through a script. Events that cannot take effect
/// (write to a read-only tag, rewrite with no MITM session, replay with
/// nothing recorded) are logged FAILED and the run continues.
pub fn run_scenario(tb: &mut Testbed, script: &ScenarioScript) -> Result<RunLog, AttackError> {
    let mut events: Vec<&ScenarioEvent> = script.events.iter().collect();
    events.sort_by_key(|e| e.t_ms);
    let mut next = 0;

    let mut entries = Vec::new();
    let mut labels: Vec<LabeledInterval> = Vec::new();
    let mut open: Vec<OpenLabel> = Vec::new();
    let mut replay_open = false;

    let close = |open: &mut Vec<OpenLabel>,
                 labels: &mut Vec<LabeledInterval>,
                 now: u64,
                 kind: LabelKind,
                 tag: Option<&str>| {
        let mut i = 0;
        while i < open.len() {
            if open[i].kind == kind && tag.map_or(true, |t| open[i].tag == t) {
                let l = open.remove(i);
                labels.push(LabeledInterval {
                    kind: l.kind,
                    tag: l.tag,
                    start_ms: l.start_ms,
                    end_ms: now,
                });
            } else {
                i += 1;
            }
        }
    };

    while tb.now_ms() < script.duration_ms {
        let now = tb.now_ms();
        while next < events.len() && events[next].t_ms <= now {
            let ev = events[next];
            next += 1;
            let mut outcome = EventOutcome::Applied;
            match &ev.action {
                EventAction::FdiWrite { tag, value, route } => {
                    let res: Result<(), String> = match route {
                        FdiRoute::PlantOverride => tb
                            .plant
                            .apply_command(tag, Value::Float(*value))
                            .map_err(|e| e.to_string()),
                        FdiRoute::PlcWrite => tb
                            .plc
                            .write_tag(tag, Value::Float(*value))
                            .map_err(|e| e.to_string()),
                        FdiRoute::MitmRewrite => {
                            let rule = MitmRule {
                                tag: tag.clone(),
                                transform: Transform::SetValue(*value),
                            };
                            if tb.link.add_rule(rule) {
                                Ok(())
                            } else {
                                Err("no active MITM session on the link".to_string())
                            }
                        }
                    };
                    match res {
                        Ok(()) => open.push(OpenLabel {
                            kind: LabelKind::Fdi,
                            tag: tag.clone(),
                            start_ms: now,
                        }),
                        Err(e) => outcome = EventOutcome::Failed(e),
                    }
                }
                EventAction::FdiClear { tag, route } => {
                    match route {
                        FdiRoute::PlantOverride => tb.plant.clear_sensor_override(tag),
                        FdiRoute::PlcWrite => tb.plc.clear_write_override(tag),
                        FdiRoute::MitmRewrite => tb.link.remove_rules_for(tag),
                    }
                    close(&mut open, &mut labels, now, LabelKind::Fdi, Some(tag));
                }
                EventAction::ImplantOn {
                    amplitude_frac,
                    freq_hz,
                    target,
                } => match LogicImplant::new(*amplitude_frac, *freq_hz, *target) {
                    Ok(imp) => {
                        tb.plc.set_implant(Some(imp));
                        tb.plc.set_implant_active(true);
                        open.push(OpenLabel {
                            kind: LabelKind::Implant,
                            tag: "FW_VALVE_CMD".to_string(),
                            start_ms: now,
                        });
                    }
                    Err(e) => outcome = EventOutcome::Failed(e.to_string()),
                },
                EventAction::ImplantOff => {
                    tb.plc.set_implant_active(false);
                    close(&mut open, &mut labels, now, LabelKind::Implant, None);
                }
                EventAction::MitmStart { rules } => {
                    tb.link.start_mitm(rules.clone());
                    open.push(OpenLabel {
                        kind: LabelKind::Mitm,
                        tag: "*".to_string(),
                        start_ms: now,
                    });
                }
                EventAction::MitmStop => {
                    tb.link.stop_mitm();
                    close(&mut open, &mut labels, now, LabelKind::Mitm, None);
                    close(&mut open, &mut labels, now, LabelKind::Fdi, None);
                }
                EventAction::DosStart {
                    drop_prob,
                    delay_ms,
                } => {
                    tb.link.start_dos(*drop_prob, *delay_ms);
                    open.push(OpenLabel {
                        kind: LabelKind::Dos,
                        tag: "*".to_string(),
                        start_ms: now,
                    });
                }
                EventAction::DosStop => {
                    tb.link.stop_dos();
                    close(&mut open, &mut labels, now, LabelKind::Dos, None);
                }
                EventAction::ReplayRecord { window_ms } => {
                    tb.link.start_record(now, *window_ms);
                }
                EventAction::ReplayPlay => {
                    if tb.link.start_replay() {
                        replay_open = true;
                        open.push(OpenLabel {
                            kind: LabelKind::Replay,
                            tag: "*".to_string(),
                            start_ms: now,
                        });
                    } else {
                        outcome =
                            EventOutcome::Failed("nothing recorded to replay".to_string());
                    }
                }
                EventAction::SteamStep { frac } => {
                    tb.plant.inject_malfunction(Malfunction::SteamStep { frac: *frac });
                }
                EventAction::PumpTrip => {
                    tb.plant.inject_malfunction(Malfunction::PumpTrip);
                }
                EventAction::SimStatus { status } => match SimStatus::parse(status) {
                    Some(s) => tb.plant.set_status(s),
                    None => outcome = EventOutcome::Failed(format!("bad status {status:?}")),
                },
            }
            entries.push(RunLogEntry {
                t_ms: now,
                action: action_name(&ev.action),
                outcome,
            });
        }

        tb.tick();

        if replay_open && !tb.link.replaying() {
            replay_open = false;
            close(&mut open, &mut labels, tb.now_ms(), LabelKind::Replay, None);
        }
    }

    let end = tb.now_ms();
    for l in open {
        labels.push(LabeledInterval {
            kind: l.kind,
            tag: l.tag,
            start_ms: l.start_ms,
            end_ms: end,
        });
    }
    labels.sort_by_key(|l| l.start_ms);

    Ok(RunLog {
        scenario: script.name.clone(),
        duration_ms: script.duration_ms,
        entries,
        labels,
    })
}
