//! One-shot subcommands: scenario runs, RL train/eval, dose probes,
//! series export, and detector runs.

use crate::CliResult;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use twinbed_core::attacks::{run_scenario, EventOutcome, LabelKind, LabeledInterval, ScenarioScript};
use twinbed_core::config::Config;
use twinbed_core::detect::{evaluate as score, spectral_detect, zscore_detect, DetectorConfig};
use twinbed_core::dose::{load_dose_table, RadiationSource, SECONDS_PER_HOUR};
use twinbed_core::harness::{Testbed, TestbedConfig};
use twinbed_core::historian::Sample;
use twinbed_core::nav::{evaluate, train, GridMap, GridWorld, NavConfig, Policy, TrainConfig};
use twinbed_core::tagbus::Quality;

pub fn scenario_run(file: &Path, seed: Option<u64>, out: Option<PathBuf>) -> CliResult {
    let mut script = ScenarioScript::load(file).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        script.seed = s;
    }
    let out = out.unwrap_or_else(|| PathBuf::from("runs").join(&script.name));

    let cfg = TestbedConfig {
        seed: script.seed,
        ..TestbedConfig::default()
    };
    let mut tb = Testbed::new(cfg);
    let log = run_scenario(&mut tb, &script).map_err(|e| e.to_string())?;

    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    std::fs::write(out.join("labels.csv"), log.labels_csv()).map_err(|e| e.to_string())?;
    let mut run_csv = String::from("t_ms,action,outcome\n");
    for e in &log.entries {
        let outcome = match &e.outcome {
            EventOutcome::Applied => "applied".to_string(),
            EventOutcome::Failed(m) => format!("failed: {}", m.replace(',', ";")),
        };
        let _ = writeln!(run_csv, "{},{},{outcome}", e.t_ms, e.action);
        println!("t={} ms  {}  {outcome}", e.t_ms, e.action);
    }
    std::fs::write(out.join("run_log.csv"), run_csv).map_err(|e| e.to_string())?;
    tb.historian
        .snapshot(&out.join("series"))
        .map_err(|e| e.to_string())?;

    let failed = log
        .entries
        .iter()
        .filter(|e| matches!(e.outcome, EventOutcome::Failed(_)))
        .count();
    println!(
        "scenario {} finished: {} events ({failed} failed), {} labeled intervals, output in {}",
        log.scenario,
        log.entries.len(),
        log.labels.len(),
        out.display()
    );
    Ok(())
}

fn build_env(map: &Path, zones: usize, zone_radius: usize) -> Result<GridWorld, String> {
    let map = GridMap::load(map).map_err(|e| e.to_string())?;
    let cfg = NavConfig {
        zone_count: zones,
        zone_radius,
        ..NavConfig::default()
    };
    Ok(GridWorld::new(map, cfg))
}

pub fn rl_train(
    map: &Path,
    steps: usize,
    seed: u64,
    zones: usize,
    zone_radius: usize,
    policy_out: Option<PathBuf>,
) -> CliResult {
    let mut env = build_env(map, zones, zone_radius)?;
    let cfg = TrainConfig {
        steps,
        seed,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let policy = train(&mut env, &cfg).map_err(|e| e.to_string())?;
    println!(
        "trained {} steps (seed {seed}) in {:.1} s",
        steps,
        start.elapsed().as_secs_f64()
    );
    if let Some(path) = policy_out {
        policy.save(&path).map_err(|e| e.to_string())?;
        println!("policy saved to {}", path.display());
    }
    let report = evaluate(&mut env, &policy, 50, 5_000).map_err(|e| e.to_string())?;
    println!("success_rate {:.2} (50 seeded greedy episodes)", report.success_rate);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn rl_eval(
    policy: &Path,
    map: &Path,
    episodes: usize,
    seed_base: u64,
    zones: usize,
    zone_radius: usize,
    report_out: Option<PathBuf>,
) -> CliResult {
    let policy = Policy::load(policy).map_err(|e| e.to_string())?;
    let mut env = build_env(map, zones, zone_radius)?;
    let report = evaluate(&mut env, &policy, episodes, seed_base).map_err(|e| e.to_string())?;
    println!("success_rate {:.2} over {episodes} episodes", report.success_rate);
    if let Some(path) = report_out {
        std::fs::write(&path, report.to_csv()).map_err(|e| e.to_string())?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

pub fn dose_probe(config: &Path, pos: [f64; 3]) -> CliResult {
    let cfg = Config::load(config).map_err(|e| format!("{}: {e}", config.display()))?;
    let base = config.parent().unwrap_or(Path::new("."));
    let table_path = cfg
        .get("table")
        .ok_or_else(|| "dose config missing table path".to_string())?;
    let table_path = if Path::new(table_path).is_absolute() {
        PathBuf::from(table_path)
    } else {
        base.join(table_path)
    };
    let dims = [
        cfg.get_usize("dims_x", 5).map_err(|e| e.to_string())?,
        cfg.get_usize("dims_y", 5).map_err(|e| e.to_string())?,
        cfg.get_usize("dims_z", 5).map_err(|e| e.to_string())?,
    ];
    let table = load_dose_table(&table_path, dims).map_err(|e| e.to_string())?;
    let origin = [
        cfg.get_f64("origin_x", 0.0).map_err(|e| e.to_string())?,
        cfg.get_f64("origin_y", 0.0).map_err(|e| e.to_string())?,
        cfg.get_f64("origin_z", 0.0).map_err(|e| e.to_string())?,
    ];
    let source = RadiationSource::new(
        origin,
        cfg.get_f64("voxel_size_m", 1.0).map_err(|e| e.to_string())?,
        dims,
        table,
        cfg.get_f64("halving_distance_m", 2.0)
            .map_err(|e| e.to_string())?,
        cfg.get_f64("boundary_rate_sv_s", 1e-4)
            .map_err(|e| e.to_string())?,
        cfg.get_f64("max_range_m", 10.0).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let rate = source.update_dose(pos).map_err(|e| e.to_string())?;
    println!("dose_rate_sv_s {rate}");
    println!("dose_rate_sv_hr {}", rate * SECONDS_PER_HOUR);
    Ok(())
}

pub fn export(run: &Path, tag: &str, out: Option<PathBuf>) -> CliResult {
    let src = run.join("series").join(format!("{tag}.csv"));
    if !src.exists() {
        return Err(format!("no series for {tag} in {}", run.display()));
    }
    let out = out.unwrap_or_else(|| run.to_path_buf());
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    let csv = out.join(format!("{tag}.csv"));
    std::fs::copy(&src, &csv).map_err(|e| e.to_string())?;
    let script = format!(
        "set datafile separator \",\"\n\
         set title \"{tag}\"\n\
         set xlabel \"time (ms)\"\n\
         set ylabel \"value\"\n\
         set key off\n\
         plot \"{tag}.csv\" skip 1 using 1:2 with lines\n"
    );
    let gp = out.join(format!("{tag}.gp"));
    std::fs::write(&gp, script).map_err(|e| e.to_string())?;
    println!("wrote {} and {}", csv.display(), gp.display());
    Ok(())
}

fn load_series(path: &Path) -> Result<Vec<Sample>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            continue;
        }
        let t_ms: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| format!("line {}: bad t_ms {:?}", i + 1, fields[0]))?;
        let value: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| format!("line {}: bad value {:?}", i + 1, fields[1]))?;
        let quality = match fields.get(2).map(|s| s.trim()) {
            Some("Stale") => Quality::Stale,
            Some("Forced") => Quality::Forced,
            _ => Quality::Good,
        };
        out.push(Sample { t_ms, value, quality });
    }
    Ok(out)
}

fn load_labels(path: &Path) -> Result<Vec<LabeledInterval>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            continue;
        }
        let kind = match fields[0].trim() {
            "FDI" => LabelKind::Fdi,
            "IMPLANT" => LabelKind::Implant,
            "MITM" => LabelKind::Mitm,
            "DOS" => LabelKind::Dos,
            "REPLAY" => LabelKind::Replay,
            other => return Err(format!("line {}: unknown label kind {other:?}", i + 1)),
        };
        out.push(LabeledInterval {
            kind,
            tag: fields[1].trim().to_string(),
            start_ms: fields[2]
                .trim()
                .parse()
                .map_err(|_| format!("line {}: bad start_ms", i + 1))?,
            end_ms: fields[3]
                .trim()
                .parse()
                .map_err(|_| format!("line {}: bad end_ms", i + 1))?,
        });
    }
    Ok(out)
}

fn detector_config(path: Option<PathBuf>) -> Result<DetectorConfig, String> {
    let mut cfg = DetectorConfig::default();
    if let Some(p) = path {
        let file = Config::load(&p).map_err(|e| format!("{}: {e}", p.display()))?;
        cfg.window = file.get_usize("window", cfg.window).map_err(|e| e.to_string())?;
        cfg.k_sigma = file.get_f64("k_sigma", cfg.k_sigma).map_err(|e| e.to_string())?;
        cfg.spectral_window = file
            .get_usize("spectral_window", cfg.spectral_window)
            .map_err(|e| e.to_string())?;
        cfg.peak_ratio_threshold = file
            .get_f64("peak_ratio_threshold", cfg.peak_ratio_threshold)
            .map_err(|e| e.to_string())?;
    }
    Ok(cfg)
}

pub fn detect_run(
    series_path: &Path,
    config: Option<PathBuf>,
    tag: Option<String>,
    labels: Option<PathBuf>,
    grace_ms: u64,
) -> CliResult {
    let tag = tag.unwrap_or_else(|| {
        series_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "SERIES".to_string())
    });
    let series = load_series(series_path)?;
    let cfg = detector_config(config)?;

    let steps = zscore_detect(&tag, &series, &cfg).map_err(|e| e.to_string())?;
    let spectral = spectral_detect(&tag, &series, &cfg).map_err(|e| e.to_string())?;

    println!("tag,t_ms,kind,score,dominant_freq_hz");
    for d in steps.iter().chain(&spectral.detections) {
        let freq = d
            .dominant_freq_hz
            .map(|f| format!("{f}"))
            .unwrap_or_default();
        println!("{},{},{:?},{},{freq}", d.tag, d.t_ms, d.kind, d.score);
    }
    if spectral.skipped_windows > 0 {
        eprintln!("note: {} spectral windows skipped (sampling gaps)", spectral.skipped_windows);
    }

    if let Some(labels_path) = labels {
        let labels = load_labels(&labels_path)?;
        println!("detector,detection_rate,false_alarm_rate,mean_latency_ms");
        for (name, dets) in [("zscore", &steps), ("spectral", &spectral.detections)] {
            let m = score(dets, &labels, grace_ms);
            println!(
                "{name},{},{},{}",
                m.detection_rate, m.false_alarm_rate, m.mean_latency_ms
            );
        }
    }
    Ok(())
}
