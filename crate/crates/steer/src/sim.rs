//! The simulation thread. It owns the engine, drains commands between steps
//! and publishes snapshots to attached sessions.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use kinon::engine::{Command, Engine, Scenario};
use kinon::KineticMap;
use tokio::sync::{mpsc as tmpsc, oneshot, watch};

use crate::frame::FrameMessage;
use crate::protocol::{ClientMessage, Hello, ServerMessage, Transport};

/// An encoded frame shared by every session that receives it.
pub type Frame = Arc<Vec<u8>>;

enum Request {
    Attach { id: u64, frames: watch::Sender<Option<Frame>>, events: tmpsc::UnboundedSender<ServerMessage>, reply: oneshot::Sender<Hello> },
    Detach { id: u64 },
    Message { id: u64, message: ClientMessage, reply: oneshot::Sender<ServerMessage> },
}

struct Subscriber {
    frames: watch::Sender<Option<Frame>>,
    events: tmpsc::UnboundedSender<ServerMessage>,
    decimation: u64,
}

struct Simulation {
    engine: Engine,
    subscribers: BTreeMap<u64, Subscriber>,
    steps_per_second: f64,
}

/// Cheap handle to a running simulation thread. The thread stops once every
/// handle and session is gone.
#[derive(Clone)]
pub struct SimHandle {
    tx: mpsc::Sender<Request>,
    next_id: Arc<AtomicU64>,
}

/// One attached client: a latest-wins frame slot and a lossless event queue.
pub struct Session {
    id: u64,
    tx: mpsc::Sender<Request>,
    pub hello: Hello,
    pub frames: watch::Receiver<Option<Frame>>,
    pub events: tmpsc::UnboundedReceiver<ServerMessage>,
}

impl SimHandle {
    /// Loads the scenario and starts the thread, paused at step 0.
    pub fn spawn(scenario: Scenario) -> kinon::Result<Self> {
        let mut engine = Engine::new(scenario)?;
        engine.set_paused(true);
        let (tx, rx) = mpsc::channel();
        let sim = Simulation { engine, subscribers: BTreeMap::new(), steps_per_second: 0.0 };
        thread::Builder::new().name("kinon-sim".into()).spawn(move || sim.run(rx)).expect("spawn simulation thread");
        Ok(SimHandle { tx, next_id: Arc::new(AtomicU64::new(0)) })
    }

    /// `None` once the simulation thread has stopped.
    pub async fn attach(&self) -> Option<Session> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (frames_tx, frames) = watch::channel(None);
        let (events_tx, events) = tmpsc::unbounded_channel();
        let (reply, hello) = oneshot::channel();
        self.tx.send(Request::Attach { id, frames: frames_tx, events: events_tx, reply }).ok()?;
        let hello = hello.await.ok()?;
        Some(Session { id, tx: self.tx.clone(), hello, frames, events })
    }
}

impl Session {
    /// Applies one control message at the next step boundary.
    pub async fn send(&self, message: ClientMessage) -> ServerMessage {
        let (reply, rx) = oneshot::channel();
        let stopped = || ServerMessage::Error { message: "simulation stopped".into() };
        if self.tx.send(Request::Message { id: self.id, message, reply }).is_err() {
            return stopped();
        }
        rx.await.unwrap_or_else(|_| stopped())
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.tx.send(Request::Detach { id: self.id });
    }
}

impl Simulation {
    fn run(mut self, rx: mpsc::Receiver<Request>) {
        let mut next = Instant::now();
        loop {
            let request = if self.engine.is_paused() {
                match rx.recv() {
                    Ok(r) => Some(r),
                    Err(_) => return,
                }
            } else {
                match rx.recv_timeout(next.saturating_duration_since(Instant::now())) {
                    Ok(r) => Some(r),
                    Err(RecvTimeoutError::Timeout) => None,
                    Err(RecvTimeoutError::Disconnected) => return,
                }
            };
            match request {
                Some(request) => {
                    let was_paused = self.engine.is_paused();
                    self.handle(request);
                    if was_paused && !self.engine.is_paused() {
                        next = Instant::now();
                    }
                }
                None => {
                    self.advance();
                    next = if self.steps_per_second > 0.0 {
                        (next + Duration::from_secs_f64(1.0 / self.steps_per_second)).max(Instant::now())
                    } else {
                        Instant::now()
                    };
                }
            }
        }
    }

    fn hello(&self) -> Hello {
        let state = self.engine.state();
        let (width, height) = crate::frame::dimensions(state);
        Hello {
            width,
            height,
            node_count: state.storage().len(),
            step: state.step(),
            map: self.engine.current_map().spec(),
            paused: self.engine.is_paused(),
            total: state.total(),
        }
    }

    fn handle(&mut self, request: Request) {
        match request {
            Request::Attach { id, frames, events, reply } => {
                self.subscribers.insert(id, Subscriber { frames, events, decimation: 1 });
                let _ = reply.send(self.hello());
                self.publish(Some(id), true);
            }
            Request::Detach { id } => {
                self.subscribers.remove(&id);
            }
            Request::Message { id, message, reply } => {
                let _ = reply.send(self.message(id, message));
            }
        }
    }

    fn message(&mut self, id: u64, message: ClientMessage) -> ServerMessage {
        let name = message.name();
        let effective_step = self.engine.step_index();
        let result: Result<bool, String> = match message {
            ClientMessage::Hello => return ServerMessage::Hello(self.hello()),
            ClientMessage::SetMap { map } => KineticMap::from_spec(&map)
                .map_err(|e| e.to_string())
                .and_then(|map| self.command(Command::SetMap(map)).map(|_| false)),
            ClientMessage::Transport { command } => {
                let command = match command {
                    Transport::Pause => Command::Pause,
                    Transport::Resume => Command::Resume,
                    Transport::Step => Command::Step,
                    Transport::Reset => Command::Reset,
                };
                let reseeds = command == Command::Reset;
                let steps = command == Command::Step;
                self.command(command).map(|_| {
                    if steps {
                        self.publish(None, false);
                    }
                    reseeds
                })
            }
            ClientMessage::Seed { initial } => self.command(Command::Reseed(initial)).map(|_| true),
            ClientMessage::SetSpeed { steps_per_second } => {
                if steps_per_second.is_finite() && steps_per_second >= 0.0 {
                    self.steps_per_second = steps_per_second;
                    Ok(false)
                } else {
                    Err(format!("invalid steps_per_second: must be finite and >= 0, got {steps_per_second}"))
                }
            }
            ClientMessage::Subscribe { decimation } => match (decimation, self.subscribers.get_mut(&id)) {
                (0, _) => Err("invalid decimation: must be at least 1".into()),
                (d, Some(sub)) => {
                    sub.decimation = d;
                    Ok(false)
                }
                (_, None) => Err("session is not attached".into()),
            },
        };
        match result {
            Ok(state_replaced) => {
                if state_replaced {
                    self.publish(None, true);
                }
                ServerMessage::Ack { command: name.into(), effective_step, step: self.engine.step_index() }
            }
            Err(message) => ServerMessage::Error { message },
        }
    }

    fn command(&mut self, command: Command) -> Result<(), String> {
        self.engine.apply(command).map_err(|e| e.to_string())
    }

    fn advance(&mut self) {
        if let Err(e) = self.engine.advance() {
            self.engine.set_paused(true);
            let message = ServerMessage::Error { message: e.to_string() };
            for sub in self.subscribers.values() {
                let _ = sub.events.send(message.clone());
            }
            return;
        }
        self.publish(None, false);
    }

    /// Sends the current frame and metrics to `only` or to every subscriber
    /// whose decimation divides the step. `force` ignores decimation.
    fn publish(&mut self, only: Option<u64>, force: bool) {
        let step = self.engine.step_index();
        let due: Vec<u64> = self
            .subscribers
            .iter()
            .filter(|(id, sub)| only.is_none_or(|o| o == **id) && (force || step.is_multiple_of(sub.decimation)))
            .map(|(id, _)| *id)
            .collect();
        if due.is_empty() {
            return;
        }
        let frame: Frame = Arc::new(FrameMessage::from_state(self.engine.state()).encode());
        let record = self.engine.record_metrics();
        for id in due {
            let sub = &self.subscribers[&id];
            sub.frames.send_replace(Some(frame.clone()));
            if sub.events.send(ServerMessage::Metrics(record.clone())).is_err() {
                self.subscribers.remove(&id);
            }
        }
    }
}
