//! Control and telemetry endpoint.
//!
//! One listening socket serves two framings of the same JSON messages:
//! newline-delimited text for scripts and `nc`, and WebSocket text frames
//! for browsers. A connection whose first bytes are `GET ` is treated as a
//! WebSocket upgrade.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{select, Receiver, Sender, TrySendError};
use thiserror::Error;
use tungstenite::Message;

use crate::command::{CommandContext, CommandQueue, Connection};
use crate::telemetry::TelemetryFrame;

/// Frames a client may fall behind by before it is dropped.
pub const CLIENT_BACKLOG: usize = 64;

const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("listener: {0}")]
    Io(#[from] std::io::Error),
}

struct Client {
    telemetry: Sender<Arc<str>>,
}

type Registry = Arc<Mutex<Vec<Client>>>;

/// Running server; dropping it shuts everything down.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    dropped: Arc<AtomicU64>,
    threads: Vec<JoinHandle<()>>,
    registry: Registry,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Clients disconnected for falling behind.
    pub fn dropped_clients(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub fn client_count(&self) -> usize {
        self.registry.lock().map(|r| r.len()).unwrap_or(0)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Ok(mut r) = self.registry.lock() {
            r.clear();
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl std::fmt::Debug for ServerHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerHandle").field("addr", &self.addr).finish_non_exhaustive()
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Bind `addr` and start the acceptor and fan-out threads.
pub fn serve_control(
    addr: &str,
    commands: CommandQueue,
    telemetry: Receiver<TelemetryFrame>,
    ctx: CommandContext,
) -> Result<ServerHandle, ApiError> {
    let listener = TcpListener::bind(addr).map_err(|source| ApiError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let dropped = Arc::new(AtomicU64::new(0));
    let registry: Registry = Arc::new(Mutex::new(Vec::new()));

    let acceptor = {
        let (shutdown, registry) = (shutdown.clone(), registry.clone());
        std::thread::spawn(move || accept_loop(listener, commands, ctx, registry, shutdown))
    };
    let fanout = {
        let (shutdown, registry, dropped) = (shutdown.clone(), registry.clone(), dropped.clone());
        std::thread::spawn(move || fanout_loop(telemetry, registry, shutdown, dropped))
    };
    Ok(ServerHandle {
        addr: local,
        shutdown,
        dropped,
        threads: vec![acceptor, fanout],
        registry,
    })
}

fn accept_loop(
    listener: TcpListener,
    commands: CommandQueue,
    ctx: CommandContext,
    registry: Registry,
    shutdown: Arc<AtomicBool>,
) {
    let mut next_id = 0u64;
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let id = next_id;
                next_id += 1;
                let (tx, rx) = crossbeam_channel::bounded(CLIENT_BACKLOG);
                if let Ok(mut r) = registry.lock() {
                    r.push(Client { telemetry: tx });
                }
                let (commands, shutdown) = (commands.clone(), shutdown.clone());
                std::thread::spawn(move || {
                    let _ = serve_client(stream, id, commands, ctx, rx, shutdown);
                });
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(_) => std::thread::sleep(POLL),
        }
    }
}

fn fanout_loop(
    telemetry: Receiver<TelemetryFrame>,
    registry: Registry,
    shutdown: Arc<AtomicBool>,
    dropped: Arc<AtomicU64>,
) {
    while !shutdown.load(Ordering::SeqCst) {
        let frame = match telemetry.recv_timeout(POLL) {
            Ok(f) => f,
            Err(crossbeam_channel::RecvTimeoutError::Timeout) => continue,
            Err(crossbeam_channel::RecvTimeoutError::Disconnected) => break,
        };
        let text: Arc<str> = frame.to_json().into();
        let Ok(mut clients) = registry.lock() else { break };
        clients.retain(|c| match c.telemetry.try_send(text.clone()) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) => {
                dropped.fetch_add(1, Ordering::Relaxed);
                false
            }
            Err(TrySendError::Disconnected(_)) => false,
        });
    }
}

fn serve_client(
    stream: TcpStream,
    id: u64,
    commands: CommandQueue,
    ctx: CommandContext,
    telemetry: Receiver<Arc<str>>,
    shutdown: Arc<AtomicBool>,
) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut head = [0u8; 4];
    // listeners that never write are line clients
    stream.set_read_timeout(Some(Duration::from_millis(250)))?;
    let n = match peek_exact(&stream, &mut head) {
        Ok(n) => n,
        Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => 0,
        Err(e) => return Err(e),
    };
    stream.set_read_timeout(None)?;
    let conn = Connection::new(id);
    if n == 4 && &head == b"GET " {
        serve_websocket(stream, conn, commands, ctx, telemetry, shutdown)
    } else {
        serve_lines(stream, conn, commands, ctx, telemetry, shutdown)
    }
}

/// Peek until `buf` is full or the peer stops sending.
fn peek_exact(stream: &TcpStream, buf: &mut [u8]) -> std::io::Result<usize> {
    loop {
        let n = stream.peek(buf)?;
        if n == 0 || n == buf.len() {
            return Ok(n);
        }
        // a short line such as "{}\n" is complete on its own
        if buf[..n].contains(&b'\n') {
            return Ok(n);
        }
        std::thread::sleep(Duration::from_millis(1));
    }
}

fn serve_lines(
    stream: TcpStream,
    mut conn: Connection,
    commands: CommandQueue,
    ctx: CommandContext,
    telemetry: Receiver<Arc<str>>,
    shutdown: Arc<AtomicBool>,
) -> std::io::Result<()> {
    let (reply_tx, reply_rx) = crossbeam_channel::unbounded::<String>();
    let mut writer = stream.try_clone()?;
    let closer = stream.try_clone()?;
    let write_thread = std::thread::spawn(move || {
        let mut send = |line: &str| -> std::io::Result<()> {
            writer.write_all(line.as_bytes())?;
            writer.write_all(b"\n")
        };
        loop {
            if shutdown.load(Ordering::SeqCst) {
                break;
            }
            let ok = select! {
                recv(reply_rx) -> r => match r {
                    Ok(line) => send(&line).is_ok(),
                    Err(_) => false,
                },
                recv(telemetry) -> f => match f {
                    Ok(text) => send(&text).is_ok(),
                    // dropped by the fan-out
                    Err(_) => false,
                },
                default(POLL) => true,
            };
            if !ok {
                break;
            }
        }
        let _ = closer.shutdown(Shutdown::Both);
    });
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let reply = commands.handle_command(&line, &mut conn, &ctx);
        if reply_tx.send(reply.to_json()).is_err() {
            break;
        }
    }
    drop(reply_tx);
    let _ = write_thread.join();
    Ok(())
}

fn serve_websocket(
    stream: TcpStream,
    mut conn: Connection,
    commands: CommandQueue,
    ctx: CommandContext,
    telemetry: Receiver<Arc<str>>,
    shutdown: Arc<AtomicBool>,
) -> std::io::Result<()> {
    let mut ws = tungstenite::accept(stream).map_err(|e| std::io::Error::other(e.to_string()))?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let fail = |e: tungstenite::Error| std::io::Error::other(e.to_string());
    while !shutdown.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    let reply = commands.handle_command(line, &mut conn, &ctx);
                    ws.send(Message::Text(reply.to_json())).map_err(fail)?;
                }
            }
            Ok(Message::Binary(_)) => {
                let reply = crate::command::Reply::Err {
                    err: None,
                    reason: "binary frames are not supported".into(),
                };
                ws.send(Message::Text(reply.to_json())).map_err(fail)?;
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
        loop {
            match telemetry.try_recv() {
                Ok(text) => ws.send(Message::Text(text.to_string())).map_err(fail)?,
                Err(crossbeam_channel::TryRecvError::Empty) => break,
                Err(crossbeam_channel::TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return Ok(());
                }
            }
        }
    }
    Ok(())
}
