use super::frame::{encode_frame, read_frame};
use super::{BusError, Message};
use std::io::Write;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

pub type Handler = Arc<dyn Fn(Message) -> Message + Send + Sync>;

/// Running tagbus server. Dropping the handle leaves the server running;
/// call [`ServerHandle::shutdown`] to stop it.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds and serves tag requests. Connections are handled concurrently;
/// requests on a single connection are answered serially, in order.
pub fn serve<A: ToSocketAddrs>(addr: A, handler: Handler) -> Result<ServerHandle, BusError> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_accept = Arc::clone(&stop);

    let accept_thread = std::thread::spawn(move || {
        loop {
            if stop_accept.load(Ordering::SeqCst) {
                break;
            }
            match listener.accept() {
                Ok((stream, _)) => {
                    let handler = Arc::clone(&handler);
                    let stop_conn = Arc::clone(&stop_accept);
                    std::thread::spawn(move || {
                        let _ = serve_connection(stream, handler, stop_conn);
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(_) => break,
            }
        }
    });

    Ok(ServerHandle {
        addr,
        stop,
        accept_thread: Some(accept_thread),
    })
}

fn serve_connection(
    mut stream: TcpStream,
    handler: Handler,
    stop: Arc<AtomicBool>,
) -> Result<(), BusError> {
    stream.set_read_timeout(Some(Duration::from_millis(200)))?;
    loop {
        if stop.load(Ordering::SeqCst) {
            return Ok(());
        }
        let msg = match read_frame(&mut stream) {
            Ok(Some(m)) => m,
            Ok(None) => return Ok(()), // peer closed
            Err(BusError::Transport(e))
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue;
            }
            Err(BusError::Frame(fe)) => {
                // Malformed request: answer with an error reply, then drop
                // the connection since framing may be desynchronized.
                let reply = Message::reply_err(0, &fe.to_string());
                let _ = stream.write_all(&encode_frame(&reply)?);
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let reply = handler(msg);
        stream.write_all(&encode_frame(&reply)?)?;
    }
}
