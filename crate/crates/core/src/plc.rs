//! Emulated PLC: tag memory, 100 Hz scan task, simulator-status
//! synchronization, the three-element steam-generator level controller, and
//! a dormant implant slot for malicious logic.

use crate::tagbus::{Quality, TagValue, Value};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use thiserror::Error;

pub const PLC_SCAN_PERIOD_MS: u64 = 10;

/// Default nominal valve command used as the controller output bias on
/// reset, matching the plant's nominal steady state.
pub const NOMINAL_VALVE_CMD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PlcError {
    #[error("control fault: non-finite input or state")]
    ControlFault,
    #[error("implant parameters out of range")]
    BadImplant,
    #[error("tag {0} is read-only")]
    ReadOnlyTag(String),
}

/// Input tags that accept external writes; everything else in PLC memory
/// (FW_VALVE_CMD, SIM_STATUS) is owned by the scan task or the plant.
pub const WRITABLE_INPUT_TAGS: &[&str] =
    &["CW_TEMP", "SG_LEVEL", "FW_FLOW", "ST_FLOW", "FW_PUMP_ON"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    pub kp_level: f64,
    pub ki_level: f64,
    pub kp_flow: f64,
    pub ki_flow: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        ControlGains {
            kp_level: 0.05,
            ki_level: 0.005,
            kp_flow: 0.01,
            ki_flow: 0.05,
        }
    }
}

/// Cascade PI controller state. The flow loop output is a bias plus the PI
/// correction so that a zero-error, zero-integrator scan holds the previous
/// command (bumpless at enable and after reset).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub level_integrator: f64,
    pub flow_integrator: f64,
    pub gains: ControlGains,
    pub scan_period_ms: u64,
    pub output_bias: f64,
    pub last_cmd: f64,
}

impl ControllerState {
    pub fn new(gains: ControlGains) -> Self {
        ControllerState {
            level_integrator: 0.0,
            flow_integrator: 0.0,
            gains,
            scan_period_ms: PLC_SCAN_PERIOD_MS,
            output_bias: NOMINAL_VALVE_CMD,
            last_cmd: NOMINAL_VALVE_CMD,
        }
    }

    pub fn reset(&mut self) {
        self.level_integrator = 0.0;
        self.flow_integrator = 0.0;
        self.output_bias = NOMINAL_VALVE_CMD;
        self.last_cmd = NOMINAL_VALVE_CMD;
    }
}

/// Three-element SG level control: the level error sets a feedwater flow
/// setpoint on top of measured steam flow, and the flow loop drives the
/// valve command. Conditional integration freezes each integrator while the
/// valve command is saturated in the direction that error would push it.
pub fn three_element_control(
    level_pct: f64,
    level_sp_pct: f64,
    w_fw: f64,
    w_st: f64,
    ctrl: &mut ControllerState,
    dt_s: f64,
) -> Result<f64, PlcError> {
    if !(level_pct.is_finite() && level_sp_pct.is_finite() && w_fw.is_finite() && w_st.is_finite())
    {
        return Err(PlcError::ControlFault);
    }
    let g = ctrl.gains;
    let e_level = level_sp_pct - level_pct;
    let flow_sp = w_st + g.kp_level * e_level + g.ki_level * ctrl.level_integrator;
    let e_flow = flow_sp - w_fw;
    let raw = ctrl.output_bias + g.kp_flow * e_flow + g.ki_flow * ctrl.flow_integrator;
    let cmd = raw.clamp(0.0, 1.0);

    let saturated_hi = raw >= 1.0;
    let saturated_lo = raw <= 0.0;
    if !(saturated_hi && e_level > 0.0) && !(saturated_lo && e_level < 0.0) {
        ctrl.level_integrator += e_level * dt_s;
    }
    if !(saturated_hi && e_flow > 0.0) && !(saturated_lo && e_flow < 0.0) {
        ctrl.flow_integrator += e_flow * dt_s;
    }
    if !(ctrl.level_integrator.is_finite() && ctrl.flow_integrator.is_finite()) {
        return Err(PlcError::ControlFault);
    }
    ctrl.last_cmd = cmd;
    Ok(cmd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SimStatus {
    Run,
    Freeze,
    Reset,
}

impl SimStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SimStatus::Run => "RUN",
            SimStatus::Freeze => "FREEZE",
            SimStatus::Reset => "RESET",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "RUN" => Some(SimStatus::Run),
            "FREEZE" => Some(SimStatus::Freeze),
            "RESET" => Some(SimStatus::Reset),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncFlags {
    pub sim_status: SimStatus,
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ImplantTarget {
    SensorIn,
    ActuatorOut,
}

/// Malicious scan hook shipped dormant. When active it superimposes a
/// low-amplitude sinusoid on a sensor input or the actuator command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogicImplant {
    pub amplitude_frac: f64,
    pub freq_hz: f64,
    pub target: ImplantTarget,
    pub active: bool,
}

impl LogicImplant {
    pub fn new(amplitude_frac: f64, freq_hz: f64, target: ImplantTarget) -> Result<Self, PlcError> {
        if !(0.0..=0.1).contains(&amplitude_frac) || !(freq_hz > 0.0 && freq_hz < 50.0) {
            return Err(PlcError::BadImplant);
        }
        Ok(LogicImplant {
            amplitude_frac,
            freq_hz,
            target,
            active: false,
        })
    }

    fn offset(&self, t_ms: u64) -> f64 {
        self.amplitude_frac * (TAU * self.freq_hz * t_ms as f64 / 1000.0).sin()
    }
}

/// Outcome of one scan, for logging and the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    /// Outbound writes to the plant, empty when holding.
    pub writes: Vec<TagValue>,
    pub held: bool,
    pub stale_input: bool,
}

pub struct PlcEmu {
    pub mem: BTreeMap<String, TagValue>,
    pub ctrl: ControllerState,
    pub sync: SyncFlags,
    pub implant: Option<LogicImplant>,
    pub level_setpoint_pct: f64,
    last_input_refresh_ms: Option<u64>,
    input_overrides: BTreeMap<String, Value>,
}

impl PlcEmu {
    pub fn new(gains: ControlGains, level_setpoint_pct: f64) -> Self {
        PlcEmu {
            mem: BTreeMap::new(),
            ctrl: ControllerState::new(gains),
            sync: SyncFlags {
                sim_status: SimStatus::Freeze,
                enabled: false,
            },
            implant: None,
            level_setpoint_pct,
            last_input_refresh_ms: None,
            input_overrides: BTreeMap::new(),
        }
    }

    /// Mirrors a fresh input snapshot from the plant into tag memory.
    /// Forced write overrides pin the mirrored value until cleared.
    pub fn refresh_inputs(&mut self, inputs: BTreeMap<String, TagValue>, now_ms: u64) {
        for (name, mut tag) in inputs {
            if let Some(v) = self.input_overrides.get(&name) {
                tag.value = v.clone();
                tag.quality = Quality::Forced;
            }
            self.mem.insert(name, tag);
        }
        self.last_input_refresh_ms = Some(now_ms);
    }

    /// External write to PLC tag memory. Only sensor input tags accept
    /// writes; the written value sticks across input refreshes (FORCED
    /// quality) until cleared.
    pub fn write_tag(&mut self, tag: &str, value: Value) -> Result<(), PlcError> {
        if !WRITABLE_INPUT_TAGS.contains(&tag) {
            return Err(PlcError::ReadOnlyTag(tag.to_string()));
        }
        self.input_overrides.insert(tag.to_string(), value.clone());
        if let Some(t) = self.mem.get_mut(tag) {
            t.value = value;
            t.quality = Quality::Forced;
        }
        Ok(())
    }

    pub fn clear_write_override(&mut self, tag: &str) {
        self.input_overrides.remove(tag);
    }

    /// Installed by the scenario runner only, never via normal tag writes.
    pub fn set_implant(&mut self, implant: Option<LogicImplant>) {
        self.implant = implant;
    }

    pub fn set_implant_active(&mut self, active: bool) {
        if let Some(imp) = self.implant.as_mut() {
            imp.active = active;
        }
    }

    fn input_f64(&self, tag: &str) -> Option<f64> {
        self.mem.get(tag).and_then(|t| t.value.as_f64())
    }

    /// Reads SIM_STATUS from tag memory and derives the enable flags.
    /// An unreadable status tag is treated as FREEZE (fail-safe hold).
    pub fn sync_routine(&mut self) -> SyncFlags {
        let status = self
            .mem
            .get("SIM_STATUS")
            .and_then(|t| match &t.value {
                Value::Text(s) => SimStatus::parse(s),
                _ => None,
            })
            .unwrap_or(SimStatus::Freeze);
        if status == SimStatus::Reset {
            self.ctrl.reset();
        }
        self.sync = SyncFlags {
            sim_status: status,
            enabled: status == SimStatus::Run,
        };
        self.sync
    }

    /// One 100 Hz scan: sync check, three-element control, implant hook,
    /// outbound FW_VALVE_CMD write. When not enabled or inputs are stale,
    /// controller state and outputs are held exactly and nothing is written.
    pub fn scan_cycle(&mut self, now_ms: u64) -> Result<ScanResult, PlcError> {
        let stale = match self.last_input_refresh_ms {
            Some(t) => now_ms.saturating_sub(t) > 2 * self.ctrl.scan_period_ms,
            None => true,
        };
        let sync = self.sync_routine();
        if !sync.enabled || stale {
            return Ok(ScanResult {
                writes: Vec::new(),
                held: true,
                stale_input: stale,
            });
        }

        let mut level = self
            .input_f64("SG_LEVEL")
            .ok_or(PlcError::ControlFault)?;
        let w_fw = self.input_f64("FW_FLOW").ok_or(PlcError::ControlFault)?;
        let w_st = self.input_f64("ST_FLOW").ok_or(PlcError::ControlFault)?;

        if let Some(imp) = self.implant {
            if imp.active && imp.target == ImplantTarget::SensorIn {
                // amplitude is a fraction of the level span (100%)
                level += imp.offset(now_ms) * 100.0;
            }
        }

        let dt_s = self.ctrl.scan_period_ms as f64 / 1000.0;
        let mut cmd =
            three_element_control(level, self.level_setpoint_pct, w_fw, w_st, &mut self.ctrl, dt_s)?;

        if let Some(imp) = self.implant {
            if imp.active && imp.target == ImplantTarget::ActuatorOut {
                cmd = (cmd + imp.offset(now_ms)).clamp(0.0, 1.0);
                self.ctrl.last_cmd = cmd;
            }
        }

        let out = TagValue {
            name: "FW_VALVE_CMD".to_string(),
            value: Value::Float(cmd),
            timestamp_ms: now_ms,
            quality: Quality::Good,
        };
        self.mem.insert(out.name.clone(), out.clone());
        Ok(ScanResult {
            writes: vec![out],
            held: false,
            stale_input: false,
        })
    }

    /// Snapshot of tag memory for historian polls.
    pub fn read_tags(&self, tags: &[String]) -> BTreeMap<String, TagValue> {
        tags.iter()
            .filter_map(|t| self.mem.get(t).cloned().map(|v| (t.clone(), v)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn status_tag(status: SimStatus) -> BTreeMap<String, TagValue> {
        let mut m = BTreeMap::new();
        m.insert(
            "SIM_STATUS".to_string(),
            TagValue::text("SIM_STATUS", status.as_str(), 0),
        );
        m
    }

    fn nominal_inputs(status: SimStatus, t: u64) -> BTreeMap<String, TagValue> {
        let mut m = status_tag(status);
        m.insert("SG_LEVEL".to_string(), TagValue::float("SG_LEVEL", 50.0, t));
        m.insert("FW_FLOW".to_string(), TagValue::float("FW_FLOW", 250.0, t));
        m.insert("ST_FLOW".to_string(), TagValue::float("ST_FLOW", 250.0, t));
        m
    }

    #[test]
    fn zero_error_holds_previous_command() {
        let mut ctrl = ControllerState::new(ControlGains::default());
        ctrl.output_bias = 0.5;
        let cmd = three_element_control(50.0, 50.0, 250.0, 250.0, &mut ctrl, 0.01).unwrap();
        assert_eq!(cmd, 0.5);
        assert_eq!(ctrl.level_integrator, 0.0);
    }

    #[test]
    fn low_level_raises_flow_setpoint() {
        let g = ControlGains::default();
        let mut ctrl = ControllerState::new(g);
        // level 2% below setpoint: proportional term alone pushes flow up
        let e_level = 2.0;
        let flow_sp = 250.0 + g.kp_level * e_level;
        assert!(flow_sp > 250.0);
        let cmd = three_element_control(48.0, 50.0, 250.0, 250.0, &mut ctrl, 0.01).unwrap();
        assert!(cmd > ctrl.output_bias - 1e-12);
        assert!(ctrl.level_integrator > 0.0);
    }

    #[test]
    fn non_finite_input_is_control_fault() {
        let mut ctrl = ControllerState::new(ControlGains::default());
        let err = three_element_control(f64::NAN, 50.0, 250.0, 250.0, &mut ctrl, 0.01);
        assert!(matches!(err, Err(PlcError::ControlFault)));
    }

    #[test]
    fn command_always_in_unit_interval() {
        let mut ctrl = ControllerState::new(ControlGains::default());
        for &(lvl, fw, st) in &[
            (0.0, 0.0, 500.0),
            (100.0, 500.0, 0.0),
            (-1e9, 0.0, 1e9),
            (1e9, 1e9, -1e9),
        ] {
            let cmd = three_element_control(lvl, 50.0, fw, st, &mut ctrl, 0.01).unwrap();
            assert!((0.0..=1.0).contains(&cmd));
        }
    }

    #[test]
    fn integrators_bounded_under_sustained_saturation() {
        let mut ctrl = ControllerState::new(ControlGains::default());
        for _ in 0..100_000 {
            three_element_control(0.0, 50.0, 0.0, 500.0, &mut ctrl, 0.01).unwrap();
        }
        assert!(ctrl.level_integrator.is_finite());
        assert!(ctrl.flow_integrator.is_finite());
        // conditional integration stops both once the valve pins high
        assert!(ctrl.level_integrator.abs() < 1e6);
        assert!(ctrl.flow_integrator.abs() < 1e6);
    }

    #[test]
    fn freeze_holds_controller_bit_identical_over_1000_scans() {
        let mut plc = PlcEmu::new(ControlGains::default(), 50.0);
        plc.refresh_inputs(nominal_inputs(SimStatus::Run, 0), 0);
        plc.scan_cycle(10).unwrap();
        plc.refresh_inputs(status_tag(SimStatus::Freeze), 20);
        let before = plc.ctrl;
        let cmd_before = plc.mem.get("FW_VALVE_CMD").cloned();
        for i in 0..1000u64 {
            let now = 30 + i * 10;
            plc.refresh_inputs(status_tag(SimStatus::Freeze), now);
            let res = plc.scan_cycle(now).unwrap();
            assert!(res.held);
            assert!(res.writes.is_empty());
        }
        assert_eq!(plc.ctrl, before);
        assert_eq!(plc.mem.get("FW_VALVE_CMD").cloned(), cmd_before);
    }

    #[test]
    fn reset_zeroes_integrators() {
        let mut plc = PlcEmu::new(ControlGains::default(), 50.0);
        plc.refresh_inputs(nominal_inputs(SimStatus::Run, 0), 0);
        plc.ctrl.level_integrator = 3.0;
        plc.ctrl.flow_integrator = -2.0;
        plc.refresh_inputs(status_tag(SimStatus::Reset), 10);
        plc.scan_cycle(10).unwrap();
        assert_eq!(plc.ctrl.level_integrator, 0.0);
        assert_eq!(plc.ctrl.flow_integrator, 0.0);
    }

    #[test]
    fn unreadable_status_is_failsafe_hold() {
        let mut plc = PlcEmu::new(ControlGains::default(), 50.0);
        let mut inputs = nominal_inputs(SimStatus::Run, 0);
        inputs.remove("SIM_STATUS");
        plc.refresh_inputs(inputs, 0);
        let res = plc.scan_cycle(0).unwrap();
        assert!(!plc.sync.enabled);
        assert!(res.held);
    }

    #[test]
    fn stale_inputs_hold_outputs() {
        let mut plc = PlcEmu::new(ControlGains::default(), 50.0);
        plc.refresh_inputs(nominal_inputs(SimStatus::Run, 0), 0);
        // 30 ms since refresh > 2 scan periods
        let res = plc.scan_cycle(30).unwrap();
        assert!(res.held);
        assert!(res.stale_input);
    }

    #[test]
    fn zero_amplitude_implant_is_identity() {
        let mut base = PlcEmu::new(ControlGains::default(), 50.0);
        let mut with = PlcEmu::new(ControlGains::default(), 50.0);
        with.set_implant(Some(
            LogicImplant::new(0.0, 1.0, ImplantTarget::ActuatorOut).unwrap(),
        ));
        with.set_implant_active(true);
        for i in 0..200u64 {
            let now = i * 10;
            let level = 50.0 + (i as f64 * 0.01).sin();
            let mut inputs = nominal_inputs(SimStatus::Run, now);
            inputs.insert("SG_LEVEL".to_string(), TagValue::float("SG_LEVEL", level, now));
            base.refresh_inputs(inputs.clone(), now);
            with.refresh_inputs(inputs, now);
            let a = base.scan_cycle(now).unwrap();
            let b = with.scan_cycle(now).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn write_override_pins_input_until_cleared() {
        let mut plc = PlcEmu::new(ControlGains::default(), 50.0);
        let with_cw = |t: u64| {
            let mut m = nominal_inputs(SimStatus::Run, t);
            m.insert("CW_TEMP".to_string(), TagValue::float("CW_TEMP", 14.77, t));
            m
        };
        plc.refresh_inputs(with_cw(0), 0);
        plc.write_tag("CW_TEMP", Value::Float(200.0)).unwrap();
        plc.refresh_inputs(with_cw(10), 10);
        let t = plc.mem.get("CW_TEMP").unwrap();
        assert_eq!(t.value, Value::Float(200.0));
        assert_eq!(t.quality, Quality::Forced);
        plc.clear_write_override("CW_TEMP");
        let mut inputs = nominal_inputs(SimStatus::Run, 20);
        inputs.insert("CW_TEMP".to_string(), TagValue::float("CW_TEMP", 14.77, 20));
        plc.refresh_inputs(inputs, 20);
        assert_eq!(plc.mem.get("CW_TEMP").unwrap().value, Value::Float(14.77));
    }

    #[test]
    fn write_to_read_only_tag_is_rejected() {
        let mut plc = PlcEmu::new(ControlGains::default(), 50.0);
        assert!(matches!(
            plc.write_tag("FW_VALVE_CMD", Value::Float(1.0)),
            Err(PlcError::ReadOnlyTag(_))
        ));
        assert!(plc.write_tag("SIM_STATUS", Value::Float(1.0)).is_err());
    }

    #[test]
    fn implant_rejects_out_of_range_params() {
        assert!(LogicImplant::new(0.2, 1.0, ImplantTarget::ActuatorOut).is_err());
        assert!(LogicImplant::new(0.02, 60.0, ImplantTarget::ActuatorOut).is_err());
        assert!(LogicImplant::new(0.02, 0.0, ImplantTarget::ActuatorOut).is_err());
    }

    #[test]
    fn resume_after_freeze_has_no_output_jump() {
        let mut plc = PlcEmu::new(ControlGains::default(), 50.0);
        // run with a small level error so integrators are live
        for i in 0..500u64 {
            let now = i * 10;
            let mut inputs = nominal_inputs(SimStatus::Run, now);
            inputs.insert("SG_LEVEL".to_string(), TagValue::float("SG_LEVEL", 49.5, now));
            plc.refresh_inputs(inputs, now);
            plc.scan_cycle(now).unwrap();
        }
        let cmd_before = plc.ctrl.last_cmd;
        // freeze for a while
        for i in 500..700u64 {
            let now = i * 10;
            plc.refresh_inputs(status_tag(SimStatus::Freeze), now);
            plc.scan_cycle(now).unwrap();
        }
        // resume: first command within one-scan increment of the held one
        let now = 7000;
        let mut inputs = nominal_inputs(SimStatus::Run, now);
        inputs.insert("SG_LEVEL".to_string(), TagValue::float("SG_LEVEL", 49.5, now));
        plc.refresh_inputs(inputs, now);
        let res = plc.scan_cycle(now).unwrap();
        let cmd_after = res.writes[0].value.as_f64().unwrap();
        let g = ControlGains::default();
        let one_scan = g.ki_flow * 1.0 * 0.01 + g.kp_flow * 1.0 + 1e-9;
        assert!((cmd_after - cmd_before).abs() <= one_scan);
    }
}
