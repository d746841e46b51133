use std::collections::{HashMap, HashSet};
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock, Weak};
use std::thread::JoinHandle;
use std::time::Duration;

use super::message::WireMessage;
use super::node::Node;

/// Largest frame accepted from a peer.
pub const MAX_FRAME_LEN: u32 = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("{0} is unreachable")]
    Unreachable(String),
    #[error("timed out talking to {0}")]
    Timeout(String),
    #[error("i/o error with {0}: {1}")]
    Io(String, String),
    #[error("malformed frame from {0}: {1}")]
    Protocol(String, String),
}

/// Request/response delivery of signed messages to a peer address.
pub trait Transport: Send + Sync {
    fn request(&self, addr: &str, msg: &WireMessage, timeout: Duration) -> Result<WireMessage, TransportError>;
}

/// In-process transport: addresses map straight to [`Node`] handlers.
/// Messages still go through encode/decode so the wire format is exercised.
#[derive(Default)]
pub struct LoopbackNet {
    nodes: RwLock<HashMap<String, Weak<Node>>>,
    down: RwLock<HashSet<String>>,
}

impl LoopbackNet {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn register(&self, node: &Arc<Node>) {
        self.nodes
            .write()
            .unwrap()
            .insert(node.listen_addr().to_string(), Arc::downgrade(node));
    }

    /// Simulates a node going offline (or coming back).
    pub fn set_down(&self, addr: &str, down: bool) {
        let mut set = self.down.write().unwrap();
        if down {
            set.insert(addr.to_string());
        } else {
            set.remove(addr);
        }
    }
}

impl Transport for LoopbackNet {
    fn request(&self, addr: &str, msg: &WireMessage, _timeout: Duration) -> Result<WireMessage, TransportError> {
        if self.down.read().unwrap().contains(addr) {
            return Err(TransportError::Unreachable(addr.into()));
        }
        let node = self
            .nodes
            .read()
            .unwrap()
            .get(addr)
            .and_then(Weak::upgrade)
            .ok_or_else(|| TransportError::Unreachable(addr.into()))?;
        let protocol = |e: crate::codec::DecodeError| TransportError::Protocol(addr.into(), e.to_string());
        let inbound = WireMessage::decode(&msg.encode()).map_err(protocol)?;
        let reply = node.handle("loopback", inbound);
        WireMessage::decode(&reply.encode()).map_err(protocol)
    }
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|l| *l <= MAX_FRAME_LEN)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// One connection per request: `[len u32 BE][envelope]` each way.
#[derive(Debug, Default, Clone, Copy)]
pub struct TcpTransport;

impl Transport for TcpTransport {
    fn request(&self, addr: &str, msg: &WireMessage, timeout: Duration) -> Result<WireMessage, TransportError> {
        let io_err = |e: io::Error| match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TransportError::Timeout(addr.into()),
            _ => TransportError::Io(addr.into(), e.to_string()),
        };
        let sock: SocketAddr = addr
            .to_socket_addrs()
            .map_err(|e| TransportError::Unreachable(format!("{addr}: {e}")))?
            .next()
            .ok_or_else(|| TransportError::Unreachable(addr.into()))?;
        let mut stream = TcpStream::connect_timeout(&sock, timeout)
            .map_err(|_| TransportError::Unreachable(addr.into()))?;
        stream.set_read_timeout(Some(timeout)).map_err(io_err)?;
        stream.set_write_timeout(Some(timeout)).map_err(io_err)?;
        stream.set_nodelay(true).ok();
        write_frame(&mut stream, &msg.encode()).map_err(io_err)?;
        let reply = read_frame(&mut stream).map_err(io_err)?;
        WireMessage::decode(&reply).map_err(|e| TransportError::Protocol(addr.into(), e.to_string()))
    }
}

/// Accept loop serving a node over TCP. Each connection gets its own thread
/// and may carry several request/response pairs.
pub struct TcpServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl TcpServer {
    pub fn spawn(node: Arc<Node>, listen: &str) -> io::Result<Self> {
        let listener = TcpListener::bind(listen)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::Builder::new()
            .name(format!("p2p-{addr}"))
            .spawn(move || {
                for conn in listener.incoming() {
                    if flag.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = conn else { continue };
                    let node = node.clone();
                    std::thread::spawn(move || serve_connection(node, stream));
                }
            })?;
        Ok(TcpServer {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for TcpServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve_connection(node: Arc<Node>, mut stream: TcpStream) {
    let peer = stream
        .peer_addr()
        .map(|a| a.to_string())
        .unwrap_or_else(|_| "unknown".into());
    let _ = stream.set_read_timeout(Some(Duration::from_secs(30)));
    loop {
        let frame = match read_frame(&mut stream) {
            Ok(f) => f,
            Err(_) => return,
        };
        let reply = match WireMessage::decode(&frame) {
            Ok(msg) => node.handle(&peer, msg),
            Err(e) => {
                tracing::warn!(%peer, error = %e, "undecodable frame");
                return;
            }
        };
        if write_frame(&mut stream, &reply.encode()).is_err() {
            return;
        }
    }
}
