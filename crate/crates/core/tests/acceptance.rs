//! End-to-end acceptance checks. Each test prints one PASS/FAIL line for
//! its criterion (run with `--nocapture` to see them on success).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::PathBuf;
use twinbed_core::attacks::{run_scenario, ScenarioScript};
use twinbed_core::detect::{spectral_detect, zscore_detect, DetectorConfig, evaluate as score};
use twinbed_core::dose::{load_dose_table, Dosimeter, RadiationSource, SECONDS_PER_HOUR};
use twinbed_core::harness::{Testbed, TestbedConfig};
use twinbed_core::historian::Sample;
use twinbed_core::nav::{
    evaluate, train, Action, GridMap, GridWorld, NavConfig, TrainConfig,
};
use twinbed_core::plant::{Malfunction, PlantParams, PlantSim};
use twinbed_core::plc::{ControlGains, PlcEmu, SimStatus};
use twinbed_core::tagbus::{decode_frame, encode_frame, Message, MessageKind, Quality, TagValue, Value};

fn verdict(n: usize, desc: &str, ok: bool) {
    println!("criterion {n} ({desc}): {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({desc}) failed");
}

fn asset(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../assets")
        .join(name)
}

#[test]
fn criterion_1_navigation_success_rate() {
    let start = std::time::Instant::now();
    let map = GridMap::load(&asset("nav_map_20.txt")).unwrap();
    let cfg = NavConfig {
        zone_count: 3,
        zone_radius: 2,
        ..NavConfig::default()
    };
    let mut env = GridWorld::new(map, cfg);
    let tcfg = TrainConfig {
        steps: 200_000,
        seed: 3,
        ..TrainConfig::default()
    };
    let policy = train(&mut env, &tcfg).unwrap();
    let report = evaluate(&mut env, &policy, 50, 5_000).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "  success rate {:.2} over 50 deterministic episodes, {elapsed:.0} s total",
        report.success_rate
    );
    verdict(
        1,
        "navigation >= 90% over 50 episodes",
        report.success_rate >= 0.90 && elapsed < 900.0,
    );
}

#[test]
fn criterion_2_fdi_reaches_twin_within_two_polls() {
    let mut tb = Testbed::new(TestbedConfig {
        seed: 1,
        ..TestbedConfig::default()
    });
    tb.run_for(10_000);
    let before = tb.twin.get("CW_TEMP").unwrap().value;

    tb.plant
        .apply_command("CW_TEMP", Value::Float(200.0))
        .unwrap();
    tb.run_for(500); // two twin-poll periods
    let after = tb.twin.get("CW_TEMP").unwrap().value;

    let series = tb.historian.query_range("CW_TEMP", 0, u64::MAX).unwrap();
    let step_in_series = series.windows(2).any(|w| {
        (w[0].value - 14.77).abs() < 0.1 && w[1].value == 200.0
    });

    verdict(
        2,
        "FDI 14.77 -> 200.0 mirrored within 500 ms",
        (before - 14.77).abs() < 0.1 && after == 200.0 && step_in_series,
    );
}

fn reference_source() -> RadiationSource {
    let table = load_dose_table(&asset("dose_table.csv"), [5, 5, 5]).unwrap();
    RadiationSource::new([0.0; 3], 1.0, [5, 5, 5], table, 2.0, 1e-4, 10.0).unwrap()
}

#[test]
fn criterion_3_dose_field_properties() {
    let source = reference_source();
    let l = 2.0;

    // Halving distance along several rays through the approximation zone.
    let center = source.center();
    let mut max_rel: f64 = 0.0;
    let dirs: [[f64; 3]; 5] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 1.0, 1.0],
        [-1.0, 1.0, 0.0],
    ];
    for raw in dirs {
        let norm = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
        let dir = [raw[0] / norm, raw[1] / norm, raw[2] / norm];
        for r0 in [4.0f64, 5.0] {
            let p0 = [
                center[0] + r0 * dir[0],
                center[1] + r0 * dir[1],
                center[2] + r0 * dir[2],
            ];
            let p1 = [
                center[0] + (r0 + l) * dir[0],
                center[1] + (r0 + l) * dir[1],
                center[2] + (r0 + l) * dir[2],
            ];
            let d0 = source.update_dose(p0).unwrap();
            let d1 = source.update_dose(p1).unwrap();
            if d0 > 0.0 {
                max_rel = max_rel.max((d1 - 0.5 * d0).abs() / d0);
            }
        }
    }

    let out = source.update_dose([50.0, 0.0, 0.0]).unwrap();

    let units_ok = source.table.rows().all(|(_, row)| {
        let expected = row.dose_rate_sv_s * SECONDS_PER_HOUR;
        (row.dose_rate_sv_hr - expected).abs() <= 1e-9 * expected.abs().max(1e-30)
    });

    // Path-integral dosimeter vs a 100x finer-step oracle.
    let path_start = [2.5, 2.5, 2.5];
    let path_end = [9.0, 2.5, 2.5];
    let total_t = 10.0;
    let integrate = |steps: usize| -> f64 {
        let dt = total_t / steps as f64;
        let mut dosimeter = Dosimeter::at(path_start);
        for i in 0..steps {
            let f = (i as f64 + 0.5) / steps as f64;
            dosimeter.position = [
                path_start[0] + f * (path_end[0] - path_start[0]),
                path_start[1],
                path_start[2],
            ];
            dosimeter.tick(&source, dt).unwrap();
        }
        dosimeter.cumulative_dose_sv
    };
    let coarse = integrate(100);
    let fine = integrate(10_000);
    let path_rel = (coarse - fine).abs() / fine;

    println!("  halving max rel err {max_rel:.2e}, path integral rel err {path_rel:.3}");
    verdict(
        3,
        "dose halving / units / zero out of range / path integral",
        max_rel <= 1e-12 && out == 0.0 && units_ok && path_rel <= 0.02,
    );
}

#[test]
fn criterion_4_freeze_determinism() {
    // PLC: 1000 scans under FREEZE leave controller state bit-identical.
    let mut plc = PlcEmu::new(ControlGains::default(), 50.0);
    let mut inputs = BTreeMap::new();
    inputs.insert(
        "SIM_STATUS".to_string(),
        TagValue::text("SIM_STATUS", "RUN", 0),
    );
    inputs.insert("SG_LEVEL".to_string(), TagValue::float("SG_LEVEL", 48.0, 0));
    inputs.insert("FW_FLOW".to_string(), TagValue::float("FW_FLOW", 240.0, 0));
    inputs.insert("ST_FLOW".to_string(), TagValue::float("ST_FLOW", 250.0, 0));
    let mut now = 0;
    for _ in 0..20 {
        now += 10;
        retime(&mut inputs, now);
        plc.refresh_inputs(inputs.clone(), now);
        plc.scan_cycle(now).unwrap();
    }
    inputs.insert(
        "SIM_STATUS".to_string(),
        TagValue::text("SIM_STATUS", "FREEZE", now),
    );
    now += 10;
    retime(&mut inputs, now);
    plc.refresh_inputs(inputs.clone(), now);
    plc.scan_cycle(now).unwrap();
    let frozen_ctrl = plc.ctrl;
    let frozen_cmd = plc.read_tags(&["FW_VALVE_CMD".to_string()]);
    let mut plc_ok = true;
    for _ in 0..1000 {
        now += 10;
        retime(&mut inputs, now);
        plc.refresh_inputs(inputs.clone(), now);
        plc.scan_cycle(now).unwrap();
        let cmd = plc.read_tags(&["FW_VALVE_CMD".to_string()]);
        if plc.ctrl != frozen_ctrl || cmd["FW_VALVE_CMD"].value != frozen_cmd["FW_VALVE_CMD"].value
        {
            plc_ok = false;
            break;
        }
    }

    // Plant: state bit-identical across any K frozen steps.
    let mut plant = PlantSim::new(PlantParams::default(), 42);
    for _ in 0..100 {
        plant.step().unwrap();
    }
    plant.set_status(SimStatus::Freeze);
    plant.step().unwrap();
    let snapshot = *plant.state();
    let mut plant_ok = true;
    for k in 0..1000 {
        plant.step().unwrap();
        if *plant.state() != snapshot {
            plant_ok = false;
            println!("  plant state drifted after {k} frozen steps");
            break;
        }
    }

    verdict(4, "freeze holds PLC and plant bit-identical", plc_ok && plant_ok);
}

fn retime(inputs: &mut BTreeMap<String, TagValue>, now: u64) {
    for tv in inputs.values_mut() {
        tv.timestamp_ms = now;
    }
}

#[test]
fn criterion_5_steam_step_regulation_both_owners() {
    let mut ok = true;
    for external in [true, false] {
        let mut tb = Testbed::new(TestbedConfig {
            external_control: external,
            seed: 5,
            ..TestbedConfig::default()
        });
        tb.run_for(100_000);
        tb.plant.inject_malfunction(Malfunction::SteamStep { frac: 0.10 });
        tb.run_for(300_000);

        let level = tb.plant.state().sg_level_pct;
        let cmds = tb
            .historian
            .query_range("FW_VALVE_CMD", 0, u64::MAX)
            .unwrap();
        let cmds_in_range = cmds.iter().all(|s| (0.0..=1.0).contains(&s.value));
        let settled = (level - 50.0).abs() <= 0.5;
        println!(
            "  {} control: level {level:.3}% at t=400 s, valve cmd in [0,1]: {cmds_in_range}",
            if external { "external" } else { "internal" }
        );
        ok &= settled && cmds_in_range && !cmds.is_empty();
    }
    verdict(5, "level back within 1% of setpoint by t=400 s", ok);
}

#[test]
fn criterion_6_implant_stealth_and_spectral_detection() {
    let script = ScenarioScript::load(&asset("scenarios/implant_valve.json")).unwrap();
    let mut tb = Testbed::new(TestbedConfig {
        seed: script.seed,
        ..TestbedConfig::default()
    });
    let log = run_scenario(&mut tb, &script).unwrap();
    let implant = &log.labels[0];

    let level = tb.historian.query_range("SG_LEVEL", 0, u64::MAX).unwrap();
    let level_in_band = level
        .iter()
        .filter(|s| s.t_ms >= implant.start_ms && s.t_ms < implant.end_ms)
        .all(|s| (s.value - 50.0).abs() <= 2.5);

    let cfg = DetectorConfig::default();
    let level_steps = zscore_detect("SG_LEVEL", &level, &cfg).unwrap();

    let valve = tb
        .historian
        .query_range("FW_VALVE_CMD", 0, u64::MAX)
        .unwrap();
    let spectral = spectral_detect("FW_VALVE_CMD", &valve, &cfg).unwrap();
    let tone = spectral
        .detections
        .iter()
        .filter(|d| d.t_ms >= implant.start_ms && d.t_ms < implant.end_ms + 30_000)
        .filter_map(|d| d.dominant_freq_hz)
        .find(|f| (f - 1.0).abs() <= 0.1);

    println!(
        "  level in +/-5% band: {level_in_band}, z-score hits on level: {}, tone: {tone:?} Hz",
        level_steps.len()
    );
    verdict(
        6,
        "implant invisible in level, visible at 1.0 Hz in valve command",
        level_in_band && level_steps.is_empty() && tone.is_some(),
    );
}

#[test]
fn criterion_7_detector_batch_and_noise_floor() {
    let cfg = DetectorConfig::default();
    let grace = cfg.window as u64 * 100;
    let mut ok = true;

    // 10 FDI runs: one labeled interval each, detected with no false alarms.
    for seed in 0..10u64 {
        let script = ScenarioScript::parse(&format!(
            r#"{{"name":"fdi_batch","duration_ms":60000,"seed":{seed},"events":[
                {{"t_ms":10000,"action":"FDI_WRITE","params":{{"tag":"CW_TEMP","value":200.0,"route":"PLANT_OVERRIDE"}}}},
                {{"t_ms":40000,"action":"FDI_CLEAR","params":{{"tag":"CW_TEMP","route":"PLANT_OVERRIDE"}}}}
            ]}}"#
        ))
        .unwrap();
        let mut tb = Testbed::new(TestbedConfig {
            seed,
            ..TestbedConfig::default()
        });
        let log = run_scenario(&mut tb, &script).unwrap();
        let series = tb.historian.query_range("CW_TEMP", 0, u64::MAX).unwrap();
        let dets = zscore_detect("CW_TEMP", &series, &cfg).unwrap();
        let m = score(&dets, &log.labels, grace);
        if m.detection_rate != 1.0 || m.false_alarm_rate != 0.0 {
            println!(
                "  FDI run seed {seed}: rate {} false alarms {}",
                m.detection_rate, m.false_alarm_rate
            );
            ok = false;
        }
    }

    // 10 benign runs: zero detections at k = 6.
    for seed in 100..110u64 {
        let mut tb = Testbed::new(TestbedConfig {
            seed,
            ..TestbedConfig::default()
        });
        tb.run_for(60_000);
        let series = tb.historian.query_range("CW_TEMP", 0, u64::MAX).unwrap();
        let dets = zscore_detect("CW_TEMP", &series, &cfg).unwrap();
        if !dets.is_empty() {
            println!("  benign run seed {seed}: {} spurious detections", dets.len());
            ok = false;
        }
    }

    // Spectral false-positive rate under white noise: < 1% of 100 windows.
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let mut fired = 0;
    for _ in 0..100 {
        let series: Vec<Sample> = (0..cfg.spectral_window)
            .map(|i| Sample {
                t_ms: i as u64 * 100,
                value: rng.gen_range(-1.0..1.0),
                quality: Quality::Good,
            })
            .collect();
        if !spectral_detect("N", &series, &cfg).unwrap().detections.is_empty() {
            fired += 1;
        }
    }
    println!("  spectral noise windows fired: {fired}/100");
    verdict(
        7,
        "z-score batch perfect, spectral noise floor < 1%",
        ok && fired == 0,
    );
}

#[test]
fn criterion_8_protocol_fuzz() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce97);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let msg = random_message(&mut rng);
        let bytes = encode_frame(&msg).unwrap();
        match decode_frame(&bytes) {
            Ok((back, used)) if back == msg && used == bytes.len() => {}
            _ => mismatches += 1,
        }
    }
    // Decoder totality on arbitrary bytes: must return, never panic.
    for _ in 0..10_000 {
        let n = rng.gen_range(0..128);
        let bytes: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
        let _ = decode_frame(&bytes);
    }
    println!("  10000 round-trip cases, {mismatches} mismatches");
    verdict(8, "frame fuzz zero mismatches, decoder total", mismatches == 0);
}

fn random_message(rng: &mut ChaCha8Rng) -> Message {
    let value = |rng: &mut ChaCha8Rng| match rng.gen_range(0..4) {
        0 => Value::Bool(rng.gen()),
        1 => Value::Int(rng.gen_range(i64::MIN / 2..i64::MAX / 2)),
        2 => Value::Float(f64::from_bits(rng.gen::<u64>() & !(0x7ffu64 << 52) | (0x3ffu64 << 52))),
        _ => Value::Text((0..rng.gen_range(0..16)).map(|_| rng.gen_range('!'..='~')).collect()),
    };
    let tag_values = |rng: &mut ChaCha8Rng| {
        let mut map = BTreeMap::new();
        for i in 0..rng.gen_range(0..6) {
            let name = format!("TAG_{i}");
            map.insert(
                name.clone(),
                TagValue {
                    name,
                    value: value(rng),
                    timestamp_ms: rng.gen(),
                    quality: match rng.gen_range(0..3) {
                        0 => Quality::Good,
                        1 => Quality::Stale,
                        _ => Quality::Forced,
                    },
                },
            );
        }
        map
    };
    let kind = match rng.gen_range(0..6) {
        0 => MessageKind::Read {
            tags: (0..rng.gen_range(0..8)).map(|i| format!("T{i}")).collect(),
        },
        1 => MessageKind::Write {
            writes: tag_values(rng),
        },
        2 => MessageKind::Status,
        3 => MessageKind::SubscribePoll {
            tags: (0..rng.gen_range(0..4)).map(|i| format!("T{i}")).collect(),
            period_ms: rng.gen(),
        },
        4 => MessageKind::Reply {
            ok: true,
            error: None,
            tags: tag_values(rng),
        },
        _ => MessageKind::Reply {
            ok: false,
            error: Some("remote failure".to_string()),
            tags: BTreeMap::new(),
        },
    };
    Message { id: rng.gen(), kind }
}

#[test]
fn criterion_9_shaping_telescopes() {
    let map = GridMap::load(&asset("nav_map_20.txt")).unwrap();
    let cfg = NavConfig {
        zone_count: 3,
        zone_radius: 2,
        ..NavConfig::default()
    };
    let gamma = cfg.reward.gamma;
    let mut env = GridWorld::new(map, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut max_err: f64 = 0.0;

    for traj in 0..1_000u64 {
        env.reset(traj).unwrap();
        let mut cells = vec![env.position()];
        for _ in 0..rng.gen_range(1..200) {
            let action = Action::from_index(rng.gen_range(0..4));
            let out = env.step(action).unwrap();
            cells.push(env.position());
            if out.terminated || out.truncated {
                break;
            }
        }
        let t_end = cells.len() - 1;
        let mut shaping_sum = 0.0;
        for (t, pair) in cells.windows(2).enumerate() {
            shaping_sum +=
                gamma.powi(t as i32) * (gamma * env.phi(pair[1]) - env.phi(pair[0]));
        }
        let expected = gamma.powi(t_end as i32) * env.phi(cells[t_end]) - env.phi(cells[0]);
        max_err = max_err.max((shaping_sum - expected).abs());
    }
    println!("  max telescoping error {max_err:.2e} over 1000 trajectories");
    verdict(9, "discounted shaping sum telescopes", max_err <= 1e-9);
}
