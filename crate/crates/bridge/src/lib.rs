//! Live operator sessions over WebSocket.
//!
//! A [`Session`] wraps one engine, starts paused and answers every client
//! command with exactly one `ack` or `err`. The [`server`] module exposes a
//! session on `/ws`: the first client controls, later ones observe.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{parse_command, Command, Envelope, ErrorCode, Role, ServerMessage, SnapshotMsg};
pub use server::{start, ServerConfig, ServerError, ServerHandle};
pub use session::{Session, SessionConfig};
