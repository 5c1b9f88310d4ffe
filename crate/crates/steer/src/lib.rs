//! Live steering of a running kinon network over a WebSocket.
//!
//! Clients send JSON control messages as text frames and receive JSON acks,
//! errors and metrics plus binary [`FrameMessage`]s. The simulation runs on
//! its own thread and applies commands only between steps, so a map change
//! acked with `effective_step = t` gives exactly the trajectory of a scenario
//! that schedules the same map from step `t`.

pub mod frame;
pub mod protocol;
mod server;
mod sim;

pub use frame::{FrameMessage, FRAME_VERSION, HEADER_LEN};
pub use protocol::{parse_client, ClientMessage, Hello, ServerMessage, Transport};
pub use server::{ServeError, Server, DEFAULT_BIND};
pub use sim::{Frame, Session, SimHandle};
