use super::{MitmRule, Transform};
use crate::tagbus::{decode_frame, encode_frame, MessageKind, MAX_FRAME_BYTES};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

/// Frame-level TCP proxy between two tagbus endpoints. With an empty rule
/// set, frames are forwarded byte for byte without re-encoding; value
/// rewrites decode, transform, and re-encode the frame.
pub struct ProxyHandle {
    pub local_addr: SocketAddr,
    rules: Arc<Mutex<Vec<MitmRule>>>,
    stop: Arc<AtomicBool>,
    accept_thread: Option<thread::JoinHandle<()>>,
}

impl ProxyHandle {
    pub fn set_rules(&self, rules: Vec<MitmRule>) {
        *self.rules.lock().unwrap() = rules;
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ProxyHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

pub fn start_proxy<A: ToSocketAddrs>(
    listen: A,
    upstream: SocketAddr,
    rules: Vec<MitmRule>,
    seed: u64,
) -> io::Result<ProxyHandle> {
    let listener = TcpListener::bind(listen)?;
    listener.set_nonblocking(true)?;
    let local_addr = listener.local_addr()?;
    let rules = Arc::new(Mutex::new(rules));
    let stop = Arc::new(AtomicBool::new(false));

    let accept_rules = Arc::clone(&rules);
    let accept_stop = Arc::clone(&stop);
    let accept_thread = thread::spawn(move || {
        let mut conn_id: u64 = 0;
        while !accept_stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((client, _)) => {
                    conn_id += 1;
                    let up = match TcpStream::connect(upstream) {
                        Ok(s) => s,
                        Err(_) => continue,
                    };
                    spawn_pipe(
                        client.try_clone().unwrap(),
                        up.try_clone().unwrap(),
                        Arc::clone(&accept_rules),
                        Arc::clone(&accept_stop),
                        seed ^ (conn_id << 1),
                    );
                    spawn_pipe(
                        up,
                        client,
                        Arc::clone(&accept_rules),
                        Arc::clone(&accept_stop),
                        seed ^ (conn_id << 1) ^ 1,
                    );
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(5));
                }
                Err(_) => break,
            }
        }
    });

    Ok(ProxyHandle {
        local_addr,
        rules,
        stop,
        accept_thread: Some(accept_thread),
    })
}

fn spawn_pipe(
    from: TcpStream,
    mut to: TcpStream,
    rules: Arc<Mutex<Vec<MitmRule>>>,
    stop: Arc<AtomicBool>,
    seed: u64,
) {
    thread::spawn(move || {
        let mut from = from;
        let _ = from.set_read_timeout(Some(Duration::from_millis(200)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let raw = match read_raw_frame(&mut from, &stop) {
                Ok(Some(raw)) => raw,
                Ok(None) | Err(_) => break,
            };
            let snapshot = rules.lock().unwrap().clone();
            let out = if snapshot.is_empty() {
                Some(raw)
            } else {
                rewrite_frame(&raw, &snapshot, &mut rng)
            };
            match out {
                Some(bytes) => {
                    if to.write_all(&bytes).is_err() {
                        break;
                    }
                }
                None => {} // dropped
            }
        }
        let _ = to.shutdown(std::net::Shutdown::Both);
    });
}

/// Applies value rules to READ replies and WRITE requests; delay and drop
/// rules act on whole frames in either direction. `None` means the frame
/// was dropped.
fn rewrite_frame(raw: &[u8], rules: &[MitmRule], rng: &mut ChaCha8Rng) -> Option<Vec<u8>> {
    let (mut msg, _) = match decode_frame(raw) {
        Ok(m) => m,
        Err(_) => return Some(raw.to_vec()), // not ours to judge; pass through
    };
    for rule in rules {
        match rule.transform {
            Transform::DropProb(p) => {
                if rng.gen::<f64>() < p {
                    return None;
                }
            }
            Transform::DelayMs(ms) => thread::sleep(Duration::from_millis(ms)),
            _ => {
                let tags = match &mut msg.kind {
                    MessageKind::Reply { tags, .. } => tags,
                    MessageKind::Write { writes } => writes,
                    _ => continue,
                };
                for (tag, tv) in tags.iter_mut() {
                    if rule.matches(tag) {
                        tv.value = rule.apply_value(&tv.value);
                    }
                }
            }
        }
    }
    encode_frame(&msg).ok()
}

/// Reads one length-prefixed frame as raw bytes, tolerating read timeouts
/// so the pipe can notice shutdown. `Ok(None)` means clean EOF.
fn read_raw_frame(stream: &mut TcpStream, stop: &AtomicBool) -> io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; 4];
    if !fill(stream, &mut header, stop, true)? {
        return Ok(None);
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "oversized frame"));
    }
    let mut payload = vec![0u8; len];
    if !fill(stream, &mut payload, stop, false)? {
        return Err(io::ErrorKind::UnexpectedEof.into());
    }
    let mut raw = Vec::with_capacity(4 + len);
    raw.extend_from_slice(&header);
    raw.extend_from_slice(&payload);
    Ok(Some(raw))
}

/// Fills `buf` completely. Returns Ok(false) on EOF before the first byte
/// when `eof_ok`, errors on EOF mid-buffer otherwise.
fn fill(
    stream: &mut TcpStream,
    buf: &mut [u8],
    stop: &AtomicBool,
    eof_ok: bool,
) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match stream.read(&mut buf[filled..]) {
            Ok(0) => {
                if filled == 0 && eof_ok {
                    return Ok(false);
                }
                return Err(io::ErrorKind::UnexpectedEof.into());
            }
            Ok(n) => filled += n,
            Err(e)
                if e.kind() == io::ErrorKind::WouldBlock
                    || e.kind() == io::ErrorKind::TimedOut =>
            {
                if stop.load(Ordering::SeqCst) {
                    return Err(io::ErrorKind::Interrupted.into());
                }
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}
