//! Deterministic in-process testbed: plant, PLC, historian, and twin mirror
//! composed on a simulated clock. The plant steps every 50 ms, the PLC
//! scans at 100 Hz, the historian polls the PLC at 100 ms, and the twin
//! polls the historian at 250 ms. Scenario runs and acceptance checks use
//! this loop; the networked topology (CLI `up`) wires the same components
//! over tagbus TCP.

use crate::attacks::LinkInterposer;
use crate::historian::Historian;
use crate::manifest::{parse_manifest, SensorManifestEntry, TagSource};
use crate::plant::{ControlOwner, PlantParams, PlantSim};
use crate::plc::{ControlGains, PlcEmu};
use crate::twin::{ComponentKind, TwinMirror};

pub const DEFAULT_MANIFEST: &str = "tag,source,period_ms\n\
CW_TEMP,PLC,100\n\
SG_LEVEL,PLC,100\n\
FW_FLOW,PLC,100\n\
ST_FLOW,PLC,100\n\
FW_VALVE_CMD,PLC,100\n\
FW_PUMP_ON,PLC,100\n";

/// Tags the PLC mirrors from the plant each scan.
pub const PLC_INPUT_TAGS: &[&str] = &[
    "CW_TEMP",
    "SG_LEVEL",
    "FW_FLOW",
    "ST_FLOW",
    "FW_PUMP_ON",
    "SIM_STATUS",
];

#[derive(Debug, Clone)]
pub struct TestbedConfig {
    pub plant: PlantParams,
    pub gains: ControlGains,
    pub historian_poll_ms: u64,
    pub twin_poll_ms: u64,
    pub external_control: bool,
    pub seed: u64,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        TestbedConfig {
            plant: PlantParams::default(),
            gains: ControlGains::default(),
            historian_poll_ms: 100,
            twin_poll_ms: 250,
            external_control: true,
            seed: 0,
        }
    }
}

pub struct Testbed {
    pub plant: PlantSim,
    pub plc: PlcEmu,
    pub historian: Historian,
    pub twin: TwinMirror,
    pub link: LinkInterposer,
    pub manifest: Vec<SensorManifestEntry>,
    cfg: TestbedConfig,
    now_ms: u64,
}

pub const TICK_MS: u64 = 10;

impl Testbed {
    pub fn new(cfg: TestbedConfig) -> Self {
        let manifest = parse_manifest(DEFAULT_MANIFEST).expect("builtin manifest");
        Self::with_manifest(cfg, manifest)
    }

    pub fn with_manifest(cfg: TestbedConfig, manifest: Vec<SensorManifestEntry>) -> Self {
        let mut plant = PlantSim::new(cfg.plant, cfg.seed);
        if cfg.external_control {
            plant.set_control_owner(ControlOwner::External);
        }
        let plc = PlcEmu::new(cfg.gains, cfg.plant.level_setpoint_pct);
        let mut twin = TwinMirror::new(&manifest, cfg.twin_poll_ms);
        twin.set_kind(
            "CW_TEMP",
            ComponentKind::Thermal {
                t_min: 0.0,
                t_max: 100.0,
            },
        );
        twin.set_kind("FW_PUMP_ON", ComponentKind::PumpOrValve);
        Testbed {
            plant,
            plc,
            historian: Historian::new(),
            twin,
            link: LinkInterposer::new(cfg.seed),
            manifest,
            cfg,
            now_ms: 0,
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    /// Advances the whole testbed by one 10 ms tick.
    pub fn tick(&mut self) {
        let now = self.now_ms;

        // PLC scan: mirror plant inputs, run logic, write outputs back.
        let input_names: Vec<String> = PLC_INPUT_TAGS.iter().map(|s| s.to_string()).collect();
        let inputs = self.plant.read_tags(&input_names);
        self.plc.refresh_inputs(inputs, now);
        if let Ok(result) = self.plc.scan_cycle(now) {
            for w in result.writes {
                let _ = self.plant.apply_command(&w.name, w.value.clone());
            }
        }

        // Plant integration step at its own fixed rate.
        if now % self.cfg.plant.step_ms == 0 {
            let _ = self.plant.step();
        }

        // Historian poll over the manifest, through the link interposer.
        if now % self.cfg.historian_poll_ms == 0 {
            let plc_tags: Vec<String> = self
                .manifest
                .iter()
                .filter(|e| e.source == TagSource::Plc)
                .map(|e| e.tag.clone())
                .collect();
            let frames = self
                .link
                .process(now, self.plc.read_tags(&plc_tags));
            let plant = &self.plant;
            let manifest = &self.manifest;
            for frame in frames {
                self.historian.poll_once(manifest, |source, tags| match source {
                    TagSource::Plc => Some(frame.clone()),
                    TagSource::Plant => Some(plant.read_tags(tags)),
                });
            }
        }

        // Twin mirror poll from the historian.
        if now % self.cfg.twin_poll_ms == 0 {
            let historian = &self.historian;
            self.twin
                .poll_update(now, |tag| historian.latest(tag).ok());
        }

        self.now_ms += TICK_MS;
    }

    /// Runs the loop for `ms` of simulated time.
    pub fn run_for(&mut self, ms: u64) {
        let end = self.now_ms + ms;
        while self.now_ms < end {
            self.tick();
        }
    }
}
