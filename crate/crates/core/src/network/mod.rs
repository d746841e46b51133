//! Node-to-node replication.
//!
//! Peers exchange signed [`WireMessage`]s over a request/response
//! [`Transport`]: length-prefixed frames over TCP, or the in-process
//! [`LoopbackNet`] used by tests. A session is opened by a three-message
//! challenge handshake and only with peers holding `connect` on the current
//! chain; every later message is checked against the sender's current
//! permissions before it can touch local state.

mod fork;
mod message;
mod node;
mod transport;

pub use fork::{resolve_fork, ForkChoice, ForkError};
pub use message::{AckStatus, Body, Challenge, MessageKind, WireMessage};
pub use node::{
    Clock, DeliveryReport, NetworkError, Node, NodeConfig, PeerDelivery, PeerSession, SessionState,
    SyncOutcome, Violation,
};
pub use transport::{
    read_frame, write_frame, LoopbackNet, TcpServer, TcpTransport, Transport, TransportError,
    MAX_FRAME_LEN,
};
