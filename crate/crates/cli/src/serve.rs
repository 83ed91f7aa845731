//! Component processes: each wraps one core struct behind a tagbus server
//! and a fixed-period background loop, networked over localhost TCP.

use crate::{now_stamp, CliResult};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};
use twinbed_core::config::Config;
use twinbed_core::harness::PLC_INPUT_TAGS;
use twinbed_core::historian::Historian;
use twinbed_core::manifest::{load_manifest, SensorManifestEntry, TagSource};
use twinbed_core::plant::{ControlOwner, PlantParams, PlantSim};
use twinbed_core::plc::{ControlGains, PlcEmu};
use twinbed_core::tagbus::{self, Client, Handler, Message, MessageKind, Quality, TagValue, Value};
use twinbed_core::twin::{ComponentKind, MirrorStatus, TwinMirror};

pub fn run(
    component: &str,
    port: u16,
    config: Option<PathBuf>,
    manifest: Option<PathBuf>,
    upstream: Option<String>,
    seed: u64,
) -> CliResult {
    match component {
        "plant" => serve_plant(port, config, seed),
        "plc" => serve_plc(port, config, upstream),
        "historian" => serve_historian(port, manifest, upstream),
        "twin" => serve_twin(port, manifest, upstream),
        other => Err(format!("unknown component {other:?} (plant|plc|historian|twin)")),
    }
}

fn log(component: &str, msg: &str) {
    println!("{} {component}: {msg}", now_stamp());
}

fn load_params(config: Option<PathBuf>) -> Result<PlantParams, String> {
    match config {
        None => Ok(PlantParams::default()),
        Some(p) => {
            let cfg = Config::load(&p).map_err(|e| e.to_string())?;
            PlantParams::from_config(&cfg).map_err(|e| e.to_string())
        }
    }
}

fn connect_retry(addr: &str) -> Result<Client, String> {
    let mut last = String::new();
    for _ in 0..25 {
        match Client::connect(addr) {
            Ok(c) => return Ok(c),
            Err(e) => last = e.to_string(),
        }
        thread::sleep(Duration::from_millis(200));
    }
    Err(format!("upstream {addr} unreachable: {last}"))
}

fn require_upstream(upstream: Option<String>, component: &str) -> Result<String, String> {
    upstream.ok_or_else(|| format!("{component} requires --upstream <addr>"))
}

fn require_manifest(
    manifest: Option<PathBuf>,
    component: &str,
) -> Result<Vec<SensorManifestEntry>, String> {
    let path = manifest.ok_or_else(|| format!("{component} requires --manifest <csv>"))?;
    load_manifest(&path).map_err(|e| e.to_string())
}

/// Serves forever; the process exits on signal.
fn park_on(handle: tagbus::ServerHandle, component: &str) -> CliResult {
    log(component, &format!("serving on {}", handle.local_addr()));
    loop {
        thread::park();
    }
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn status_reply(id: u64, component: &str, extra: BTreeMap<String, TagValue>) -> Message {
    let mut tags = extra;
    tags.insert(
        "COMPONENT".to_string(),
        TagValue::text("COMPONENT", component, 0),
    );
    Message::reply_ok(id, tags)
}

fn serve_plant(port: u16, config: Option<PathBuf>, seed: u64) -> CliResult {
    let params = load_params(config)?;
    let step_ms = params.step_ms;
    let mut sim = PlantSim::new(params, seed);
    // Networked topology: the PLC process owns the loop.
    sim.set_control_owner(ControlOwner::External);
    let plant = Arc::new(Mutex::new(sim));

    let stepper = Arc::clone(&plant);
    thread::spawn(move || loop {
        thread::sleep(Duration::from_millis(step_ms));
        let _ = stepper.lock().unwrap().step();
    });

    let state = Arc::clone(&plant);
    let handler: Handler = Arc::new(move |msg| {
        let mut plant = state.lock().unwrap();
        match msg.kind {
            MessageKind::Read { tags } => Message::reply_ok(msg.id, plant.read_tags(&tags)),
            MessageKind::Write { writes } => {
                for (name, tv) in writes {
                    if let Err(e) = plant.apply_command(&name, tv.value) {
                        return Message::reply_err(msg.id, &e.to_string());
                    }
                }
                Message::reply_ok(msg.id, BTreeMap::new())
            }
            MessageKind::Status | MessageKind::SubscribePoll { .. } => {
                let tags = plant.read_tags(&["SIM_STATUS".to_string(), "CONTROL_OWNER".to_string()]);
                status_reply(msg.id, "plant", tags)
            }
            MessageKind::Reply { .. } => Message::reply_err(msg.id, "unexpected reply"),
        }
    });
    let handle = tagbus::serve(("127.0.0.1", port), handler).map_err(|e| e.to_string())?;
    park_on(handle, "plant")
}

fn serve_plc(port: u16, config: Option<PathBuf>, upstream: Option<String>) -> CliResult {
    let addr = require_upstream(upstream, "plc")?;
    let params = load_params(config)?;
    let gains = ControlGains {
        kp_level: params.gains.kp_level,
        ki_level: params.gains.ki_level,
        kp_flow: params.gains.kp_flow,
        ki_flow: params.gains.ki_flow,
    };
    let plc = Arc::new(Mutex::new(PlcEmu::new(gains, params.level_setpoint_pct)));

    let scan_state = Arc::clone(&plc);
    let mut client = connect_retry(&addr)?;
    let start = Instant::now();
    thread::spawn(move || {
        let input_names: Vec<String> = PLC_INPUT_TAGS.iter().map(|s| s.to_string()).collect();
        loop {
            thread::sleep(Duration::from_millis(twinbed_core::plc::PLC_SCAN_PERIOD_MS));
            let now = elapsed_ms(start);
            let Ok(inputs) = client.read(&input_names) else {
                continue;
            };
            let writes = {
                let mut plc = scan_state.lock().unwrap();
                plc.refresh_inputs(inputs, now);
                match plc.scan_cycle(now) {
                    Ok(r) => r.writes,
                    Err(_) => continue,
                }
            };
            for w in writes {
                let _ = client.write(w);
            }
        }
    });

    let state = Arc::clone(&plc);
    let handler: Handler = Arc::new(move |msg| {
        let mut plc = state.lock().unwrap();
        match msg.kind {
            MessageKind::Read { tags } => Message::reply_ok(msg.id, plc.read_tags(&tags)),
            MessageKind::Write { writes } => {
                for (name, tv) in writes {
                    if let Err(e) = plc.write_tag(&name, tv.value) {
                        return Message::reply_err(msg.id, &e.to_string());
                    }
                }
                Message::reply_ok(msg.id, BTreeMap::new())
            }
            MessageKind::Status | MessageKind::SubscribePoll { .. } => {
                let tags = plc.read_tags(&["SIM_STATUS".to_string()]);
                status_reply(msg.id, "plc", tags)
            }
            MessageKind::Reply { .. } => Message::reply_err(msg.id, "unexpected reply"),
        }
    });
    let handle = tagbus::serve(("127.0.0.1", port), handler).map_err(|e| e.to_string())?;
    park_on(handle, "plc")
}

fn serve_historian(port: u16, manifest: Option<PathBuf>, upstream: Option<String>) -> CliResult {
    let addr = require_upstream(upstream, "historian")?;
    let manifest = require_manifest(manifest, "historian")?;
    let poll_ms = manifest.iter().map(|e| e.period_ms).min().unwrap_or(100);
    let historian = Arc::new(Mutex::new(Historian::new()));

    let poll_state = Arc::clone(&historian);
    let mut client = connect_retry(&addr)?;
    thread::spawn(move || loop {
        thread::sleep(Duration::from_millis(poll_ms));
        poll_state
            .lock()
            .unwrap()
            .poll_once(&manifest, |source, tags| match source {
                // Single upstream link; plant-sourced rows would need their
                // own connection and are skipped in the networked topology.
                TagSource::Plc => client.read(tags).ok(),
                TagSource::Plant => None,
            });
    });

    let state = Arc::clone(&historian);
    let handler: Handler = Arc::new(move |msg| {
        let historian = state.lock().unwrap();
        match msg.kind {
            MessageKind::Read { tags } => {
                let mut out = BTreeMap::new();
                for tag in tags {
                    if let Ok(s) = historian.latest(&tag) {
                        let mut tv = TagValue::float(&tag, s.value, s.t_ms);
                        tv.quality = s.quality;
                        out.insert(tag, tv);
                    }
                }
                Message::reply_ok(msg.id, out)
            }
            MessageKind::Write { .. } => Message::reply_err(msg.id, "historian is read-only"),
            MessageKind::Status | MessageKind::SubscribePoll { .. } => {
                let mut tags = BTreeMap::new();
                tags.insert(
                    "TAG_COUNT".to_string(),
                    TagValue {
                        name: "TAG_COUNT".to_string(),
                        value: Value::Int(historian.tags().len() as i64),
                        timestamp_ms: 0,
                        quality: Quality::Good,
                    },
                );
                status_reply(msg.id, "historian", tags)
            }
            MessageKind::Reply { .. } => Message::reply_err(msg.id, "unexpected reply"),
        }
    });
    let handle = tagbus::serve(("127.0.0.1", port), handler).map_err(|e| e.to_string())?;
    park_on(handle, "historian")
}

fn serve_twin(port: u16, manifest: Option<PathBuf>, upstream: Option<String>) -> CliResult {
    let addr = require_upstream(upstream, "twin")?;
    let manifest = require_manifest(manifest, "twin")?;
    let poll_ms = 250;
    let mut mirror = TwinMirror::new(&manifest, poll_ms);
    mirror.set_kind(
        "CW_TEMP",
        ComponentKind::Thermal {
            t_min: 0.0,
            t_max: 100.0,
        },
    );
    mirror.set_kind("FW_PUMP_ON", ComponentKind::PumpOrValve);
    let twin = Arc::new(Mutex::new(mirror));

    let poll_state = Arc::clone(&twin);
    let mut client = connect_retry(&addr)?;
    let start = Instant::now();
    thread::spawn(move || loop {
        thread::sleep(Duration::from_millis(poll_ms));
        let now = elapsed_ms(start);
        poll_state.lock().unwrap().poll_update(now, |tag| {
            let tv = client.read_one(tag).ok()?;
            Some(twinbed_core::historian::Sample {
                t_ms: tv.timestamp_ms,
                value: tv.value.as_f64()?,
                quality: tv.quality,
            })
        });
    });

    let state = Arc::clone(&twin);
    let start_serve = Instant::now();
    let handler: Handler = Arc::new(move |msg| {
        let twin = state.lock().unwrap();
        match msg.kind {
            MessageKind::Read { tags } => {
                let now = elapsed_ms(start_serve);
                let mut out = BTreeMap::new();
                for tag in tags {
                    if let Ok(var) = twin.get(&tag) {
                        let mut tv =
                            TagValue::float(&tag, var.value, now.saturating_sub(var.age_ms));
                        if var.status == MirrorStatus::Stale {
                            tv.quality = Quality::Stale;
                        }
                        out.insert(tag, tv);
                    }
                }
                Message::reply_ok(msg.id, out)
            }
            MessageKind::Write { .. } => Message::reply_err(msg.id, "twin is read-only"),
            MessageKind::Status | MessageKind::SubscribePoll { .. } => {
                status_reply(msg.id, "twin", BTreeMap::new())
            }
            MessageKind::Reply { .. } => Message::reply_err(msg.id, "unexpected reply"),
        }
    });
    let handle = tagbus::serve(("127.0.0.1", port), handler).map_err(|e| e.to_string())?;
    park_on(handle, "twin")
}
