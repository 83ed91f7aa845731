//! Topology supervisor: spawns the component processes in dependency
//! order (plant -> plc -> historian -> twin), confirms readiness with
//! STATUS round-trips, and tears everything down on exit.

use crate::{now_stamp, CliResult};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command};
use std::thread;
use std::time::Duration;
use twinbed_core::config::Config;
use twinbed_core::tagbus::Client;

struct ComponentSpec {
    name: &'static str,
    port: u16,
    args: Vec<String>,
}

struct Topology {
    components: Vec<ComponentSpec>,
}

fn log(msg: &str) {
    println!("{} up: {msg}", now_stamp());
}

fn parse_topology(path: &Path) -> Result<Topology, String> {
    let cfg = Config::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &str| -> String {
        let pb = PathBuf::from(p);
        if pb.is_absolute() {
            p.to_string()
        } else {
            base.join(pb).to_string_lossy().into_owned()
        }
    };

    let seed = cfg.get_u64("seed", 0).map_err(|e| e.to_string())?;
    let plant_config = cfg.get("plant_config").map(&resolve);
    let manifest = cfg.get("manifest").map(&resolve);

    let mut components = Vec::new();
    let mut ports: BTreeMap<u16, &'static str> = BTreeMap::new();
    let mut upstream_port = 0u16;
    for (name, default_port) in [
        ("plant", 4810u16),
        ("plc", 4811),
        ("historian", 4812),
        ("twin", 4813),
    ] {
        let enabled = cfg
            .get_bool(&format!("{name}_enabled"), true)
            .map_err(|e| e.to_string())?;
        if !enabled {
            continue;
        }
        let port = cfg
            .get_u64(&format!("{name}_port"), u64::from(default_port))
            .map_err(|e| e.to_string())? as u16;
        if let Some(other) = ports.insert(port, name) {
            return Err(format!("port {port} assigned to both {other} and {name}"));
        }

        let mut args = vec![
            "serve".to_string(),
            name.to_string(),
            "--port".to_string(),
            port.to_string(),
        ];
        match name {
            "plant" => {
                if let Some(c) = &plant_config {
                    args.extend(["--config".to_string(), c.clone()]);
                }
                args.extend(["--seed".to_string(), seed.to_string()]);
            }
            "plc" => {
                if upstream_port == 0 {
                    return Err("plc enabled without plant upstream".to_string());
                }
                if let Some(c) = &plant_config {
                    args.extend(["--config".to_string(), c.clone()]);
                }
                args.extend(["--upstream".to_string(), format!("127.0.0.1:{upstream_port}")]);
            }
            "historian" | "twin" => {
                if upstream_port == 0 {
                    return Err(format!("{name} enabled without an upstream component"));
                }
                let m = manifest
                    .clone()
                    .ok_or_else(|| format!("{name} enabled but topology sets no manifest"))?;
                args.extend(["--manifest".to_string(), m]);
                args.extend(["--upstream".to_string(), format!("127.0.0.1:{upstream_port}")]);
            }
            _ => unreachable!(),
        }
        upstream_port = port;
        components.push(ComponentSpec { name, port, args });
    }
    if components.is_empty() {
        return Err("topology enables no components".to_string());
    }
    Ok(Topology { components })
}

fn check_port_free(port: u16, name: &str) -> Result<(), String> {
    TcpListener::bind(("127.0.0.1", port))
        .map(drop)
        .map_err(|e| format!("{name} port {port} not free: {e}"))
}

fn wait_ready(name: &str, port: u16) -> Result<(), String> {
    let addr = format!("127.0.0.1:{port}");
    let mut last = String::new();
    for _ in 0..50 {
        match Client::connect(&addr).and_then(|mut c| c.status()) {
            Ok(_) => return Ok(()),
            Err(e) => last = e.to_string(),
        }
        thread::sleep(Duration::from_millis(100));
    }
    Err(format!("{name} failed readiness on {addr}: {last}"))
}

fn kill_all(children: &mut [(&'static str, Child)]) {
    for (_, child) in children.iter_mut().rev() {
        let _ = child.kill();
        let _ = child.wait();
    }
}

fn pidfile(run_dir: &Path) -> PathBuf {
    run_dir.join("pids")
}

pub fn up(topology_path: &Path, duration_s: u64, run_dir: &Path) -> CliResult {
    let topology = parse_topology(topology_path)?;
    for c in &topology.components {
        check_port_free(c.port, c.name)?;
    }
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;

    let mut children: Vec<(&'static str, Child)> = Vec::new();
    for c in &topology.components {
        let child = Command::new(&exe)
            .args(&c.args)
            .spawn()
            .map_err(|e| format!("spawning {}: {e}", c.name))?;
        children.push((c.name, child));
        if let Err(e) = wait_ready(c.name, c.port) {
            kill_all(&mut children);
            return Err(e);
        }
        log(&format!("{} ready on port {}", c.name, c.port));
    }

    std::fs::create_dir_all(run_dir).map_err(|e| e.to_string())?;
    let mut f = std::fs::File::create(pidfile(run_dir)).map_err(|e| e.to_string())?;
    for ((name, child), spec) in children.iter().zip(&topology.components) {
        writeln!(f, "{name} {} {}", child.id(), spec.port).map_err(|e| e.to_string())?;
    }
    drop(f);
    log("topology ready");

    let deadline = (duration_s > 0).then(|| std::time::Instant::now() + Duration::from_secs(duration_s));
    let mut failed: Option<String> = None;
    'supervise: loop {
        if let Some(d) = deadline {
            if std::time::Instant::now() >= d {
                break;
            }
        }
        for (name, child) in children.iter_mut() {
            if let Ok(Some(status)) = child.try_wait() {
                failed = Some(format!("{name} exited early: {status}"));
                break 'supervise;
            }
        }
        thread::sleep(Duration::from_millis(200));
    }

    kill_all(&mut children);
    let _ = std::fs::remove_file(pidfile(run_dir));
    log("topology down");
    match failed {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn down(run_dir: &Path) -> CliResult {
    let path = pidfile(run_dir);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("no running topology ({}: {e})", path.display()))?;
    for line in text.lines() {
        let mut parts = line.split_whitespace();
        let (Some(name), Some(pid)) = (parts.next(), parts.next()) else {
            continue;
        };
        let status = Command::new("kill")
            .arg(pid)
            .status()
            .map_err(|e| e.to_string())?;
        if status.success() {
            println!("{} down: stopped {name} (pid {pid})", now_stamp());
        }
    }
    let _ = std::fs::remove_file(path);
    Ok(())
}
