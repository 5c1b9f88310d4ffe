//! WebSocket front end: one task per connection, translating text frames to
//! control messages and forwarding frames and events.

use std::net::SocketAddr;

use futures_util::{SinkExt, StreamExt};
use kinon::engine::Scenario;
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::protocol::CloseFrame;
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{parse_client, to_json, ServerMessage};
use crate::sim::SimHandle;

pub const DEFAULT_BIND: &str = "127.0.0.1:8700";

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Scenario(#[from] kinon::Error),
    #[error("cannot bind: {0}")]
    Bind(std::io::Error),
}

/// A listening server. Dropping it stops accepting connections.
pub struct Server {
    addr: SocketAddr,
    accept: JoinHandle<()>,
}

impl Server {
    pub async fn start(scenario: Scenario, addr: impl ToSocketAddrs) -> Result<Server, ServeError> {
        let sim = SimHandle::spawn(scenario)?;
        let listener = TcpListener::bind(addr).await.map_err(ServeError::Bind)?;
        let addr = listener.local_addr().map_err(ServeError::Bind)?;
        let accept = tokio::spawn(async move {
            while let Ok((stream, _)) = listener.accept().await {
                tokio::spawn(connection(stream, sim.clone()));
            }
        });
        Ok(Server { addr, accept })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Serves until the accept loop fails.
    pub async fn wait(mut self) {
        let _ = (&mut self.accept).await;
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.accept.abort();
    }
}

async fn connection(stream: TcpStream, sim: SimHandle) {
    let Ok(ws) = tokio_tungstenite::accept_async(stream).await else { return };
    let (mut sink, mut source) = ws.split();
    let Some(mut session) = sim.attach().await else {
        let _ = sink.send(close(CloseCode::Away, "simulation stopped")).await;
        return;
    };
    if sink.send(text(&ServerMessage::Hello(session.hello.clone()))).await.is_err() {
        return;
    }
    loop {
        let outgoing = tokio::select! {
            incoming = source.next() => match incoming {
                Some(Ok(Message::Text(body))) => {
                    let mut replies = Vec::new();
                    for line in body.lines().filter(|l| !l.trim().is_empty()) {
                        let reply = match parse_client(line) {
                            Ok(message) => session.send(message).await,
                            Err(e) => ServerMessage::Error { message: e.to_string() },
                        };
                        replies.push(text(&reply));
                    }
                    replies
                }
                Some(Ok(Message::Binary(_))) => {
                    let _ = sink.send(close(CloseCode::Unsupported, "control messages must be JSON text")).await;
                    return;
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                Some(Ok(_)) => Vec::new(),
            },
            Some(event) = session.events.recv() => vec![text(&event)],
            Ok(()) = session.frames.changed() => {
                let frame = session.frames.borrow_and_update().clone();
                frame.map(|f| Message::Binary(f.to_vec())).into_iter().collect()
            }
        };
        for message in outgoing {
            if sink.send(message).await.is_err() {
                return;
            }
        }
    }
}

fn text(message: &ServerMessage) -> Message {
    Message::Text(to_json(message))
}

fn close(code: CloseCode, reason: &str) -> Message {
    Message::Close(Some(CloseFrame { code, reason: reason.to_owned().into() }))
}
